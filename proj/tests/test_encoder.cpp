#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "emoprobe/encoder.hpp"
#include "emoprobe/error.hpp"
#include "emoprobe/pipelines.hpp"
#include "test_util.hpp"

using namespace emoprobe;
using testing::random_matrix;

namespace {

// Fill every adapter tensor with noise so all gradient paths are live.
AdapterParams live_adapters(const MiniEncoderConfig& enc, const AdapterConfig& cfg, std::mt19937_64& rng) {
  auto p = AdapterParams::init(enc, cfg, rng());
  for (auto& la : p.layers) {
    la.query.b = random_matrix(la.query.b.rows(), la.query.b.cols(), rng, 0.3);
    la.value.b = random_matrix(la.value.b.rows(), la.value.b.cols(), rng, 0.3);
    la.up = random_matrix(la.up.rows(), la.up.cols(), rng, 0.3);
  }
  return p;
}

// Backbone with larger weights than the 0.02 default so attention and the
// FFN are far from linear.
std::shared_ptr<FrozenEncoder> loud_encoder(const MiniEncoderConfig& cfg, std::mt19937_64& rng) {
  auto enc = std::make_shared<FrozenEncoder>(FrozenEncoder::init(cfg));
  for (auto& w : enc->layers) {
    for (auto* m : {&w.wq, &w.wk, &w.wv, &w.wo, &w.w1, &w.w2}) *m = random_matrix(m->rows(), m->cols(), rng, 0.4);
    w.ln1_gamma = Eigen::VectorXd::Ones(w.ln1_gamma.size()) + random_matrix(w.ln1_gamma.size(), 1, rng, 0.1);
    w.b1 = random_matrix(w.b1.size(), 1, rng, 0.1);
  }
  return enc;
}

ProbeParams random_probe(int dim, std::mt19937_64& rng) {
  return {random_matrix(6, dim, rng), random_matrix(6, 1, rng)};
}

double scalar_gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// One pre-norm block with a single attention head, written with plain loops.
Eigen::MatrixXd scalar_block(const EncoderLayerWeights& w, const LayerAdapters& ad, double lora_scale,
                             const Eigen::MatrixXd& x) {
  const int T = static_cast<int>(x.rows());
  const int D = static_cast<int>(x.cols());
  const int F = static_cast<int>(w.w1.rows());
  auto norm = [&](const Eigen::MatrixXd& in, const Eigen::VectorXd& g, const Eigen::VectorXd& b) {
    Eigen::MatrixXd out(T, D);
    for (int t = 0; t < T; ++t) {
      double mean = 0.0;
      for (int d = 0; d < D; ++d) mean += in(t, d);
      mean /= D;
      double var = 0.0;
      for (int d = 0; d < D; ++d) var += (in(t, d) - mean) * (in(t, d) - mean);
      var /= D;
      for (int d = 0; d < D; ++d) out(t, d) = (in(t, d) - mean) / std::sqrt(var + 1e-5) * g(d) + b(d);
    }
    return out;
  };
  auto lin = [&](const Eigen::MatrixXd& in, const Eigen::MatrixXd& W, const Eigen::VectorXd* b) {
    Eigen::MatrixXd out(in.rows(), W.rows());
    for (int t = 0; t < in.rows(); ++t)
      for (int o = 0; o < W.rows(); ++o) {
        double acc = b != nullptr ? (*b)(o) : 0.0;
        for (int i = 0; i < W.cols(); ++i) acc += W(o, i) * in(t, i);
        out(t, o) = acc;
      }
    return out;
  };

  const Eigen::MatrixXd a = norm(x, w.ln1_gamma, w.ln1_beta);
  Eigen::MatrixXd q = lin(a, w.wq, &w.bq);
  const Eigen::MatrixXd k = lin(a, w.wk, &w.bk);
  Eigen::MatrixXd v = lin(a, w.wv, &w.bv);
  const Eigen::MatrixXd dq = lin(lin(a, ad.query.a, nullptr), ad.query.b, nullptr);
  const Eigen::MatrixXd dv = lin(lin(a, ad.value.a, nullptr), ad.value.b, nullptr);
  for (int t = 0; t < T; ++t)
    for (int d = 0; d < D; ++d) {
      q(t, d) += lora_scale * dq(t, d);
      v(t, d) += lora_scale * dv(t, d);
    }

  Eigen::MatrixXd ctx = Eigen::MatrixXd::Zero(T, D);
  for (int i = 0; i < T; ++i) {
    std::vector<double> score(static_cast<std::size_t>(T));
    double denom = 0.0;
    for (int j = 0; j < T; ++j) {
      double s = 0.0;
      for (int d = 0; d < D; ++d) s += q(i, d) * k(j, d);
      score[static_cast<std::size_t>(j)] = std::exp(s / std::sqrt(static_cast<double>(D)));
      denom += score[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < T; ++j)
      for (int d = 0; d < D; ++d) ctx(i, d) += score[static_cast<std::size_t>(j)] / denom * v(j, d);
  }
  const Eigen::MatrixXd h1 = x + lin(ctx, w.wo, &w.bo);
  const Eigen::MatrixXd c = norm(h1, w.ln2_gamma, w.ln2_beta);
  Eigen::MatrixXd u = lin(c, w.w1, &w.b1);
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f) u(t, f) = scalar_gelu(u(t, f));
  const Eigen::MatrixXd f = lin(u, w.w2, &w.b2);
  Eigen::MatrixXd z = lin(f, ad.down, nullptr);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < z.cols(); ++j) z(t, j) = std::max(0.0, z(t, j));
  return h1 + f + lin(z, ad.up, nullptr);
}

}  // namespace

TEST_CASE("adapters at init reproduce the frozen encoder bit-for-bit") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    MiniEncoderConfig cfg;
    cfg.num_layers = 3;
    cfg.model_dim = 8;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    cfg.seed = seed;
    cfg.positional = seed % 2 == 1;
    const auto enc = FrozenEncoder::init(cfg);
    const auto ad = AdapterParams::init(cfg, AdapterConfig{4, 8.0, 6}, seed + 100);
    std::mt19937_64 rng(seed);
    const auto x = random_matrix(5, 8, rng);
    const auto frozen = encoder_forward(enc, nullptr, x);
    const auto adapted = encoder_forward(enc, &ad, x);
    for (std::size_t l = 0; l < 3; ++l) CHECK(frozen.hidden[l] == adapted.hidden[l]);
  }
}

TEST_CASE("single-head block agrees with a scalar reference") {
  MiniEncoderConfig cfg;
  cfg.num_layers = 1;
  cfg.model_dim = 4;
  cfg.num_heads = 1;
  cfg.ffn_dim = 6;
  std::mt19937_64 rng(7);
  const auto enc = loud_encoder(cfg, rng);
  const auto ad = live_adapters(cfg, AdapterConfig{2, 4.0, 3}, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_matrix(2, 4, rng);
    const auto got = encoder_forward(*enc, &ad, x).hidden[0];
    const auto want = scalar_block(enc->layers[0], ad.layers[0], ad.lora_scaling(), x);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("identical frames give identical outputs without positions") {
  MiniEncoderConfig cfg;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  std::mt19937_64 rng(2);
  const auto enc = loud_encoder(cfg, rng);
  const auto ad = live_adapters(cfg, AdapterConfig{}, rng);
  const Eigen::RowVectorXd frame = random_matrix(1, 8, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 1) * frame;
  const auto out = encoder_forward(*enc, &ad, x).hidden.back();
  for (Eigen::Index t = 1; t < 4; ++t) CHECK((out.row(t) - out.row(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encoder input validation") {
  MiniEncoderConfig cfg;
  cfg.model_dim = 6;
  cfg.num_heads = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.num_heads = 2;
  const auto enc = FrozenEncoder::init(cfg);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(encoder_forward(enc, nullptr, random_matrix(3, 5, rng)), DimensionMismatch);
  auto bad = FrozenEncoder::init(cfg);
  bad.layers[0].wq(0, 0) = std::numeric_limits<double>::infinity();
  try {
    encoder_forward(bad, nullptr, random_matrix(3, 6, rng));
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
}

TEST_CASE("PEFT pipeline gradients match central differences on every tensor") {
  MiniEncoderConfig cfg;
  cfg.num_layers = 2;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  cfg.ffn_dim = 16;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    std::mt19937_64 rng(seed);
    const auto enc = loud_encoder(cfg, rng);
    auto agg = AggregatorParams::make(AggregationMode::weighting_gate, 2);
    agg.ws_logits = random_matrix(2, 1, rng);
    agg.gate_logits = random_matrix(2, 1, rng);
    auto pipe = peft_assemble(enc, live_adapters(cfg, AdapterConfig{3, 6.0, 5}, rng), agg, random_probe(8, rng));
    const auto x = random_matrix(3, 8, rng);
    const int label = static_cast<int>(seed % 6);

    auto params = pipe.trainable();
    std::vector<Eigen::MatrixXd> grads;
    for (const auto& p : params) grads.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
    pipe.accumulate(x, label, 1.0, grads);
    const auto loss = [&] { return cross_entropy(pipe.logits(x), label, nullptr); };
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto numeric = testing::numeric_gradient(*params[i].value, loss, 1e-4);
      const double err = testing::tensor_rel_error(grads[i], numeric);
      INFO(params[i].name);
      CHECK(err < 1e-3);
      worst = std::max(worst, err);
    }
  }
  MESSAGE("worst tensor relative error " << worst);
}

TEST_CASE("a gated-off top layer sends no gradient to its adapters") {
  MiniEncoderConfig cfg;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  std::mt19937_64 rng(11);
  const auto enc = loud_encoder(cfg, rng);
  auto agg = AggregatorParams::make(AggregationMode::weighting_gate, 2);
  agg.gate_logits(1) = -50.0;
  auto pipe = peft_assemble(enc, live_adapters(cfg, AdapterConfig{}, rng), agg, random_probe(8, rng));
  const auto names = pipe.parameter_names();
  const auto g = pipe.backward(random_matrix(4, 8, rng), random_matrix(6, 1, rng));
  int checked = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].rfind("adapters.2.", 0) == 0) {
      CHECK(g[i].cwiseAbs().maxCoeff() < 1e-8);
      ++checked;
    }
    if (names[i] == "adapters.1.bottleneck.up") CHECK(g[i].cwiseAbs().maxCoeff() > 1e-6);
  }
  CHECK(checked == 6);
}

TEST_CASE("zero upstream gradient gives exactly zero parameter gradients") {
  MiniEncoderConfig cfg;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  std::mt19937_64 rng(5);
  const auto enc = loud_encoder(cfg, rng);
  auto pipe = peft_assemble(enc, live_adapters(cfg, AdapterConfig{}, rng),
                            AggregatorParams::make(AggregationMode::weighting_gate, 2), random_probe(8, rng));
  for (const auto& g : pipe.backward(random_matrix(3, 8, rng), Eigen::VectorXd::Zero(6))) {
    CHECK(g.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("trainable parameter census") {
  MiniEncoderConfig cfg;
  cfg.num_layers = 2;
  cfg.model_dim = 64;
  cfg.num_heads = 4;
  cfg.ffn_dim = 128;
  auto enc = std::make_shared<const FrozenEncoder>(FrozenEncoder::init(cfg));
  auto pipe = peft_assemble(enc, AdapterParams::init(cfg, AdapterConfig{8, 16.0, 32}, 1),
                            AggregatorParams::make(AggregationMode::weighting_gate, 2), ProbeParams::zeros(64));
  CHECK(pipe.trainable_count() == 12682);
  CHECK(peft_parameter_count(2, 64, 8, 32, 6) == 12682);
  const auto names = pipe.parameter_names();
  CHECK(names.size() == 16);
  CHECK(names.front() == "adapters.1.lora_query.A");
  CHECK(names.back() == "probe.b");
}

TEST_CASE("backbone is untouched by training and LoRA updates stay low rank") {
  MiniEncoderConfig cfg;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  cfg.ffn_dim = 16;
  auto enc = std::make_shared<const FrozenEncoder>(FrozenEncoder::init(cfg));
  const auto before = enc->checksum();
  auto pipe = peft_assemble(enc, AdapterParams::init(cfg, AdapterConfig{2, 4.0, 4}, 3),
                            AggregatorParams::make(AggregationMode::weighting_gate, 2), ProbeParams::zeros(8));

  std::mt19937_64 rng(4);
  LabeledSet train, val;
  for (int i = 0; i < 24; ++i) {
    Eigen::MatrixXd x = random_matrix(3, 8, rng);
    x.col(i % 6).array() += 3.0;
    (i < 18 ? train : val).inputs.push_back(x);
    (i < 18 ? train : val).labels.push_back(i % 6);
  }
  TrainConfig tc;
  tc.epochs = 25;
  tc.batch_size = 4;  // 5 steps per epoch -> 125 optimizer steps
  fit(pipe, train, val, tc);
  CHECK(pipe.backbone_checksum() == before);
  CHECK(FrozenEncoder::init(cfg).checksum() == before);

  const auto& q = pipe.adapters()->layers[0].query;
  CHECK(q.b.cwiseAbs().maxCoeff() > 0.0);
  const Eigen::MatrixXd delta = q.b * q.a;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(delta);
  const auto& sv = svd.singularValues();
  for (Eigen::Index i = 2; i < sv.size(); ++i) CHECK(sv(i) <= 1e-10 * sv(0));
}

TEST_CASE("peft_assemble rejects mismatched pieces") {
  MiniEncoderConfig cfg;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  auto enc = std::make_shared<const FrozenEncoder>(FrozenEncoder::init(cfg));
  CHECK_THROWS_AS(peft_assemble(enc, std::nullopt, AggregatorParams::make(AggregationMode::weighted_sum, 3),
                                ProbeParams::zeros(8)),
                  DimensionMismatch);
  CHECK_THROWS_AS(peft_assemble(enc, std::nullopt, AggregatorParams::make(AggregationMode::weighted_sum, 2),
                                ProbeParams::zeros(9)),
                  DimensionMismatch);
  auto deeper = cfg;
  deeper.num_layers = 3;
  CHECK_THROWS_AS(peft_assemble(enc, AdapterParams::init(deeper, AdapterConfig{}, 0),
                                AggregatorParams::make(AggregationMode::weighted_sum, 2), ProbeParams::zeros(8)),
                  DimensionMismatch);
  CHECK_THROWS_AS(peft_assemble(nullptr, std::nullopt, AggregatorParams::make(AggregationMode::weighted_sum, 2),
                                ProbeParams::zeros(8)),
                  ConfigError);
}
