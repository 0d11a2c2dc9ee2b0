#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace emoprobe {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 500;
  int batch_size = 32;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  // Throws ConfigError when a field violates its range.
  void validate() const;
};

// First/second moments per tensor plus the shared step counter.
struct AdamWState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  std::uint64_t step = 0;

  void reset() {
    m.clear();
    v.clear();
    step = 0;
  }
};

// Decoupled weight decay (theta *= 1 - lr * lambda) followed by the
// bias-corrected Adam delta. A non-finite gradient aborts the step before
// anything is touched.
void adamw_step(std::span<Eigen::MatrixXd* const> params, std::span<const Eigen::MatrixXd> grads,
                AdamWState& state, const TrainConfig& config);

}  // namespace emoprobe
