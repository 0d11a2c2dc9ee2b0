#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "emoprobe/embedding_store.hpp"

namespace emoprobe {

struct ClassGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Class-conditional Gaussian fixture description. Frame vectors at layer l
// are drawn as layer_signal[l] * mean + N(0, cov).
struct SyntheticConfig {
  std::size_t num_layers = 4;
  std::size_t num_frames = 8;
  std::size_t dim = 8;
  std::array<std::size_t, kNumEmotions> counts{};  // per class, per domain
  std::vector<Domain> domains = {Domain::speech, Domain::music};
  std::array<ClassGaussian, kNumEmotions> speech;
  std::array<ClassGaussian, kNumEmotions> music;
  // Effective music mean = coupling * speech mean + (1 - coupling) * music mean.
  double coupling = 0.0;
  std::vector<double> layer_signal;  // empty = 1 for every layer
  std::string model_tag = "synthetic";

  // Speech class c centred at separation * e_c, music offset by
  // domain_shift along the all-ones diagonal. Requires dim >= 6.
  static SyntheticConfig blobs(std::size_t num_layers, std::size_t num_frames, std::size_t dim,
                               std::size_t count_per_class, double separation, double noise_std,
                               double coupling, double domain_shift = 0.0);
};

struct SyntheticDataset {
  std::vector<EmbeddingRecord> records;
  DatasetManifest manifest;
};

// Throws ConfigError for shape mismatches or a non-PSD covariance.
void validate_synthetic_config(const SyntheticConfig& config);

SyntheticDataset generate_synthetic_manifest(const SyntheticConfig& config, std::uint64_t seed);

SyntheticConfig synthetic_config_from_json(const std::string& text);

}  // namespace emoprobe
