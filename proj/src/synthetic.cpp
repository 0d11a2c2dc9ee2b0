#include "emoprobe/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include <json.hpp>

#include "emoprobe/error.hpp"

namespace emoprobe {

namespace {

std::string stratum_name(Domain d, Emotion e) {
  return std::string(to_string(d)) + "/" + std::string(to_string(e));
}

// Returns F with F F^T = cov, or throws ConfigError if cov is not symmetric PSD.
Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov, const std::string& where) {
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ConfigError("covariance for " + where + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw ConfigError("eigendecomposition failed for " + where);
  const auto& lambda = eig.eigenvalues();
  if (lambda.minCoeff() < -1e-10 * scale) {
    throw ConfigError("covariance for " + where + " is not positive semi-definite (min eigenvalue " +
                      std::to_string(lambda.minCoeff()) + ")");
  }
  return eig.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace

SyntheticConfig SyntheticConfig::blobs(std::size_t num_layers, std::size_t num_frames, std::size_t dim,
                                       std::size_t count_per_class, double separation, double noise_std,
                                       double coupling, double domain_shift) {
  if (dim < static_cast<std::size_t>(kNumEmotions)) {
    throw ConfigError("blob fixtures need dim >= 6 to place one class per axis");
  }
  SyntheticConfig c;
  c.num_layers = num_layers;
  c.num_frames = num_frames;
  c.dim = dim;
  c.counts.fill(count_per_class);
  c.coupling = coupling;
  const auto d = static_cast<Eigen::Index>(dim);
  const Eigen::VectorXd shift = Eigen::VectorXd::Constant(d, domain_shift / std::sqrt(double(dim)));
  const Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(d, d) * (noise_std * noise_std);
  for (int k = 0; k < kNumEmotions; ++k) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    mu(k) = separation;
    c.speech[k] = {mu, cov};
    c.music[k] = {mu + shift, cov};
  }
  return c;
}

void validate_synthetic_config(const SyntheticConfig& c) {
  if (c.num_layers == 0 || c.num_frames == 0 || c.dim == 0) {
    throw ConfigError("synthetic config needs positive num_layers, num_frames and dim");
  }
  if (c.coupling < 0.0 || c.coupling > 1.0) throw ConfigError("coupling must lie in [0, 1]");
  if (!c.layer_signal.empty() && c.layer_signal.size() != c.num_layers) {
    throw ConfigError("layer_signal has " + std::to_string(c.layer_signal.size()) + " entries for " +
                      std::to_string(c.num_layers) + " layers");
  }
  const auto d = static_cast<Eigen::Index>(c.dim);
  for (Domain dom : c.domains) {
    const auto& classes = dom == Domain::speech ? c.speech : c.music;
    for (Emotion e : kAllEmotions) {
      const auto& g = classes[index_of(e)];
      // Music means mix in the speech mean, so it must be valid for either domain.
      if (c.speech[index_of(e)].mean.size() != d) {
        throw ConfigError("speech mean for " + std::string(to_string(e)) + " must have " + std::to_string(d) +
                          " entries");
      }
      if (g.mean.size() != d || g.cov.rows() != d || g.cov.cols() != d) {
        throw ConfigError("Gaussian for " + stratum_name(dom, e) + " does not match dim " + std::to_string(d));
      }
      covariance_factor(g.cov, stratum_name(dom, e));
    }
  }
}

SyntheticDataset generate_synthetic_manifest(const SyntheticConfig& c, std::uint64_t seed) {
  validate_synthetic_config(c);
  const auto d = static_cast<Eigen::Index>(c.dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticDataset out;
  Eigen::VectorXd z(d);
  for (Domain dom : c.domains) {
    for (Emotion e : kAllEmotions) {
      const int k = index_of(e);
      const ClassGaussian& g = dom == Domain::speech ? c.speech[k] : c.music[k];
      const Eigen::VectorXd mean =
          dom == Domain::speech ? c.speech[k].mean : (c.coupling * c.speech[k].mean + (1.0 - c.coupling) * g.mean);
      const Eigen::MatrixXd factor = covariance_factor(g.cov, stratum_name(dom, e));
      for (std::size_t i = 0; i < c.counts[k]; ++i) {
        char id[96];
        std::snprintf(id, sizeof(id), "%s_%s_%04zu", std::string(to_string(dom)).c_str(),
                      std::string(to_string(e)).c_str(), i);
        EmbeddingRecord rec(id, dom, e, c.model_tag, c.num_layers, c.num_frames, c.dim);
        for (std::size_t l = 0; l < c.num_layers; ++l) {
          const double signal = c.layer_signal.empty() ? 1.0 : c.layer_signal[l];
          for (std::size_t t = 0; t < c.num_frames; ++t) {
            for (Eigen::Index j = 0; j < d; ++j) z(j) = normal(rng);
            const Eigen::VectorXd x = signal * mean + factor * z;
            for (Eigen::Index j = 0; j < d; ++j) rec.at(l, t, static_cast<std::size_t>(j)) = static_cast<float>(x(j));
          }
        }
        out.records.push_back(std::move(rec));
      }
    }
  }
  const auto metas = metadata_of(out.records);
  out.manifest = make_stratified_split(metas, seed);
  return out;
}

namespace {

ClassGaussian parse_gaussian(const nlohmann::json& j, Eigen::Index d, const std::string& where) {
  ClassGaussian g;
  const auto mean = j.at("mean").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(mean.size()) != d) {
    throw ConfigError("mean for " + where + " has " + std::to_string(mean.size()) + " entries, expected " +
                      std::to_string(d));
  }
  g.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
  if (j.contains("cov")) {
    const auto rows = j.at("cov").get<std::vector<std::vector<double>>>();
    if (static_cast<Eigen::Index>(rows.size()) != d) throw ConfigError("cov for " + where + " has wrong shape");
    g.cov.resize(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
      if (static_cast<Eigen::Index>(rows[r].size()) != d) throw ConfigError("cov for " + where + " has wrong shape");
      for (Eigen::Index col = 0; col < d; ++col) g.cov(r, col) = rows[r][col];
    }
  } else {
    const double sd = j.value("std", 1.0);
    g.cov = Eigen::MatrixXd::Identity(d, d) * sd * sd;
  }
  return g;
}

}  // namespace

SyntheticConfig synthetic_config_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    const auto layers = j.at("num_layers").get<std::size_t>();
    const auto frames = j.at("num_frames").get<std::size_t>();
    const auto dim = j.at("dim").get<std::size_t>();
    const double coupling = j.value("coupling", 0.0);

    SyntheticConfig c;
    if (j.contains("blobs")) {
      const auto& b = j.at("blobs");
      c = SyntheticConfig::blobs(layers, frames, dim, j.value("count_per_class", std::size_t{20}),
                                 b.value("separation", 10.0), b.value("noise_std", 1.0), coupling,
                                 b.value("domain_shift", 0.0));
    } else {
      c.num_layers = layers;
      c.num_frames = frames;
      c.dim = dim;
      c.coupling = coupling;
      c.counts.fill(j.value("count_per_class", std::size_t{20}));
      const auto d = static_cast<Eigen::Index>(dim);
      for (Domain dom : kAllDomains) {
        auto& classes = dom == Domain::speech ? c.speech : c.music;
        const auto& jd = j.at("classes").at(std::string(to_string(dom)));
        for (Emotion e : kAllEmotions) {
          classes[index_of(e)] = parse_gaussian(jd.at(std::string(to_string(e))), d, stratum_name(dom, e));
        }
      }
    }
    if (j.contains("counts")) {
      for (const auto& [name, n] : j.at("counts").items()) {
        const auto e = parse_emotion(name);
        if (!e) throw ConfigError("unknown emotion '" + name + "' in counts");
        c.counts[index_of(*e)] = n.get<std::size_t>();
      }
    }
    if (j.contains("domains")) {
      c.domains.clear();
      for (const auto& name : j.at("domains")) {
        const auto dom = parse_domain(name.get<std::string>());
        if (!dom) throw ConfigError("unknown domain in synthetic config");
        c.domains.push_back(*dom);
      }
    }
    c.layer_signal = j.value("layer_signal", std::vector<double>{});
    c.model_tag = j.value("model_tag", std::string("synthetic"));
    validate_synthetic_config(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed synthetic config: ") + e.what());
  }
}

}  // namespace emoprobe
