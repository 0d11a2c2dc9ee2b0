#include "emoprobe/encoder.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "emoprobe/error.hpp"

namespace emoprobe {

namespace {

constexpr double kLayerNormEps = 1e-5;

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::VectorXd& bias) {
  return (x * w.transpose()).rowwise() + bias.transpose();
}

// Row-wise layer norm. Stores x-hat and 1/std for the backward pass.
Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& gamma, const Eigen::VectorXd& beta,
                           Eigen::MatrixXd& xhat, Eigen::VectorXd& inv_std) {
  const Eigen::VectorXd mean = x.rowwise().mean();
  xhat = x.colwise() - mean;
  inv_std = (xhat.array().square().rowwise().mean() + kLayerNormEps).rsqrt();
  xhat = inv_std.asDiagonal() * xhat;
  return (xhat * gamma.asDiagonal()).rowwise() + beta.transpose();
}

Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dy, const Eigen::MatrixXd& xhat,
                                    const Eigen::VectorXd& inv_std, const Eigen::VectorXd& gamma) {
  const Eigen::MatrixXd dxhat = dy * gamma.asDiagonal();
  const Eigen::VectorXd mean_d = dxhat.rowwise().mean();
  const Eigen::VectorXd mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
  Eigen::MatrixXd dx = dxhat.colwise() - mean_d;
  dx -= mean_dx.asDiagonal() * xhat;
  return inv_std.asDiagonal() * dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

void row_softmax_inplace(Eigen::MatrixXd& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double peak = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - peak).exp();
    s.row(i) /= s.row(i).sum();
  }
}

void hash_bytes(std::uint64_t& h, const double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) {
    auto bits = std::bit_cast<std::uint64_t>(data[i]);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFFu;
      h *= 1099511628211ull;
    }
  }
}

template <class M>
void hash_tensor(std::uint64_t& h, const M& m) {
  hash_bytes(h, m.data(), m.size());
}

}  // namespace

void MiniEncoderConfig::validate() const {
  if (num_layers < 1 || model_dim < 1 || num_heads < 1 || ffn_dim < 1) {
    throw ConfigError("mini encoder dimensions must be positive");
  }
  if (model_dim % num_heads != 0) {
    throw ConfigError("model_dim " + std::to_string(model_dim) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
}

FrozenEncoder FrozenEncoder::init(const MiniEncoderConfig& config) {
  config.validate();
  FrozenEncoder enc;
  enc.config = config;
  std::mt19937_64 rng(config.seed);
  const Eigen::Index D = config.model_dim;
  const Eigen::Index F = config.ffn_dim;
  constexpr double kStd = 0.02;
  for (int l = 0; l < config.num_layers; ++l) {
    EncoderLayerWeights w;
    w.ln1_gamma = Eigen::VectorXd::Ones(D);
    w.ln1_beta = Eigen::VectorXd::Zero(D);
    w.wq = gaussian(D, D, kStd, rng);
    w.wk = gaussian(D, D, kStd, rng);
    w.wv = gaussian(D, D, kStd, rng);
    w.wo = gaussian(D, D, kStd, rng);
    w.bq = w.bk = w.bv = w.bo = Eigen::VectorXd::Zero(D);
    w.ln2_gamma = Eigen::VectorXd::Ones(D);
    w.ln2_beta = Eigen::VectorXd::Zero(D);
    w.w1 = gaussian(F, D, kStd, rng);
    w.b1 = Eigen::VectorXd::Zero(F);
    w.w2 = gaussian(D, F, kStd, rng);
    w.b2 = Eigen::VectorXd::Zero(D);
    enc.layers.push_back(std::move(w));
  }
  return enc;
}

std::uint64_t FrozenEncoder::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& w : layers) {
    hash_tensor(h, w.ln1_gamma);
    hash_tensor(h, w.ln1_beta);
    hash_tensor(h, w.wq);
    hash_tensor(h, w.wk);
    hash_tensor(h, w.wv);
    hash_tensor(h, w.wo);
    hash_tensor(h, w.bq);
    hash_tensor(h, w.bk);
    hash_tensor(h, w.bv);
    hash_tensor(h, w.bo);
    hash_tensor(h, w.ln2_gamma);
    hash_tensor(h, w.ln2_beta);
    hash_tensor(h, w.w1);
    hash_tensor(h, w.b1);
    hash_tensor(h, w.w2);
    hash_tensor(h, w.b2);
  }
  return h;
}

AdapterParams AdapterParams::init(const MiniEncoderConfig& encoder, const AdapterConfig& config, std::uint64_t seed) {
  if (config.lora_rank < 1 || config.bottleneck_dim < 1) {
    throw ConfigError("LoRA rank and bottleneck dim must be >= 1");
  }
  AdapterParams p;
  p.config = config;
  std::mt19937_64 rng(seed);
  const Eigen::Index D = encoder.model_dim;
  const Eigen::Index r = config.lora_rank;
  const Eigen::Index db = config.bottleneck_dim;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(D));
  for (int l = 0; l < encoder.num_layers; ++l) {
    LayerAdapters la;
    la.query = {gaussian(r, D, stddev, rng), Eigen::MatrixXd::Zero(D, r)};
    la.value = {gaussian(r, D, stddev, rng), Eigen::MatrixXd::Zero(D, r)};
    la.down = gaussian(db, D, stddev, rng);
    la.up = Eigen::MatrixXd::Zero(D, db);
    p.layers.push_back(std::move(la));
  }
  return p;
}

Eigen::MatrixXd sinusoidal_positions(Eigen::Index frames, Eigen::Index dim) {
  Eigen::MatrixXd pe(frames, dim);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(t, i) = (i % 2 == 0) ? std::sin(static_cast<double>(t) * freq) : std::cos(static_cast<double>(t) * freq);
    }
  }
  return pe;
}

EncoderTrace encoder_forward(const FrozenEncoder& encoder, const AdapterParams* adapters,
                             const Eigen::MatrixXd& input, bool keep_cache) {
  const auto& cfg = encoder.config;
  const Eigen::Index D = cfg.model_dim;
  if (input.cols() != D) {
    throw DimensionMismatch("encoder expects model_dim " + std::to_string(D) + ", input has " +
                            std::to_string(input.cols()) + " columns");
  }
  if (input.rows() < 1) throw DimensionMismatch("encoder input has no frames");
  if (adapters != nullptr && adapters->layers.size() != encoder.layers.size()) {
    throw DimensionMismatch("adapter stack has " + std::to_string(adapters->layers.size()) + " layers, encoder has " +
                            std::to_string(encoder.layers.size()));
  }
  const Eigen::Index T = input.rows();
  const Eigen::Index H = cfg.num_heads;
  const Eigen::Index dh = D / H;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double lora_scale = adapters != nullptr ? adapters->lora_scaling() : 0.0;

  EncoderTrace trace;
  Eigen::MatrixXd h = cfg.positional ? Eigen::MatrixXd(input + sinusoidal_positions(T, D)) : input;

  for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
    const auto& w = encoder.layers[l];
    const LayerAdapters* ad = adapters != nullptr ? &adapters->layers[l] : nullptr;
    EncoderLayerCache c;
    c.input = h;

    c.a = layer_norm(h, w.ln1_gamma, w.ln1_beta, c.xhat1, c.inv_std1);
    c.q = affine(c.a, w.wq, w.bq);
    c.k = affine(c.a, w.wk, w.bk);
    c.v = affine(c.a, w.wv, w.bv);
    if (ad != nullptr) {
      c.tq = c.a * ad->query.a.transpose();
      c.tv = c.a * ad->value.a.transpose();
      c.q += lora_scale * (c.tq * ad->query.b.transpose());
      c.v += lora_scale * (c.tv * ad->value.b.transpose());
    }

    c.ctx.resize(T, D);
    c.probs.resize(static_cast<std::size_t>(H));
    for (Eigen::Index head = 0; head < H; ++head) {
      const auto cols = Eigen::seqN(head * dh, dh);
      Eigen::MatrixXd s = attn_scale * (c.q(Eigen::all, cols) * c.k(Eigen::all, cols).transpose());
      row_softmax_inplace(s);
      c.ctx(Eigen::all, cols) = s * c.v(Eigen::all, cols);
      c.probs[static_cast<std::size_t>(head)] = std::move(s);
    }
    c.h1 = h + affine(c.ctx, w.wo, w.bo);

    c.c = layer_norm(c.h1, w.ln2_gamma, w.ln2_beta, c.xhat2, c.inv_std2);
    c.u = affine(c.c, w.w1, w.b1);
    c.g = c.u.unaryExpr([](double x) { return gelu(x); });
    c.f = affine(c.g, w.w2, w.b2);
    Eigen::MatrixXd ffn_out = c.f;
    if (ad != nullptr) {
      c.z = c.f * ad->down.transpose();
      ffn_out += c.z.cwiseMax(0.0) * ad->up.transpose();
    }
    h = c.h1 + ffn_out;
    if (!h.allFinite()) throw NumericalError("non-finite activation in encoder layer " + std::to_string(l + 1));
    trace.hidden.push_back(h);
    if (keep_cache) trace.cache.push_back(std::move(c));
  }
  return trace;
}

AdapterParams encoder_backward(const FrozenEncoder& encoder, const AdapterParams& adapters, const EncoderTrace& trace,
                               const std::vector<Eigen::MatrixXd>& d_hidden) {
  const auto& cfg = encoder.config;
  const std::size_t L = encoder.layers.size();
  if (trace.cache.size() != L) throw Error("encoder_backward needs a forward trace recorded with keep_cache");
  if (d_hidden.size() != L) throw DimensionMismatch("expected one hidden-state gradient per layer");
  if (adapters.layers.size() != L) throw DimensionMismatch("adapter stack depth does not match encoder");

  const Eigen::Index H = cfg.num_heads;
  const Eigen::Index dh = cfg.model_dim / H;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double s = adapters.lora_scaling();

  AdapterParams grads;
  grads.config = adapters.config;
  grads.layers.resize(L);

  Eigen::MatrixXd carry;
  for (std::size_t li = L; li-- > 0;) {
    const auto& w = encoder.layers[li];
    const auto& c = trace.cache[li];
    const auto& ad = adapters.layers[li];
    auto& gd = grads.layers[li];

    Eigen::MatrixXd dh_out = d_hidden[li];
    if (carry.size() > 0) dh_out += carry;
    if (!dh_out.allFinite()) {
      throw NumericalError("non-finite gradient at encoder layer " + std::to_string(li + 1));
    }

    // Bottleneck adapter on the FFN output.
    const Eigen::MatrixXd relu_z = c.z.cwiseMax(0.0);
    gd.up = dh_out.transpose() * relu_z;
    const Eigen::MatrixXd dz = (dh_out * ad.up).cwiseProduct((c.z.array() > 0.0).cast<double>().matrix());
    gd.down = dz.transpose() * c.f;
    const Eigen::MatrixXd df = dh_out + dz * ad.down;

    // Feed-forward block.
    const Eigen::MatrixXd dg = df * w.w2;
    const Eigen::MatrixXd du = dg.cwiseProduct(c.u.unaryExpr([](double x) { return gelu_grad(x); }));
    const Eigen::MatrixXd dc = du * w.w1;
    Eigen::MatrixXd dh1 = dh_out + layer_norm_backward(dc, c.xhat2, c.inv_std2, w.ln2_gamma);

    // Attention.
    const Eigen::MatrixXd dctx = dh1 * w.wo;
    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(c.q.rows(), c.q.cols());
    Eigen::MatrixXd dk = dq;
    Eigen::MatrixXd dv = dq;
    for (Eigen::Index head = 0; head < H; ++head) {
      const auto cols = Eigen::seqN(head * dh, dh);
      const auto& p = c.probs[static_cast<std::size_t>(head)];
      const Eigen::MatrixXd dctx_h = dctx(Eigen::all, cols);
      const Eigen::MatrixXd dp = dctx_h * c.v(Eigen::all, cols).transpose();
      dv(Eigen::all, cols) = p.transpose() * dctx_h;
      const Eigen::VectorXd row_dot = dp.cwiseProduct(p).rowwise().sum();
      const Eigen::MatrixXd ds = attn_scale * p.cwiseProduct(dp.colwise() - row_dot);
      dq(Eigen::all, cols) = ds * c.k(Eigen::all, cols);
      dk(Eigen::all, cols) = ds.transpose() * c.q(Eigen::all, cols);
    }
    Eigen::MatrixXd da = dq * w.wq + dk * w.wk + dv * w.wv;

    // LoRA on query and value.
    gd.query.b = s * dq.transpose() * c.tq;
    const Eigen::MatrixXd dtq = s * dq * ad.query.b;
    gd.query.a = dtq.transpose() * c.a;
    da += dtq * ad.query.a;
    gd.value.b = s * dv.transpose() * c.tv;
    const Eigen::MatrixXd dtv = s * dv * ad.value.b;
    gd.value.a = dtv.transpose() * c.a;
    da += dtv * ad.value.a;

    carry = dh1 + layer_norm_backward(da, c.xhat1, c.inv_std1, w.ln1_gamma);
  }
  return grads;
}

}  // namespace emoprobe
