#include "emoprobe/adamw.hpp"

#include <cmath>
#include <string>

#include "emoprobe/error.hpp"

namespace emoprobe {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

void adamw_step(std::span<Eigen::MatrixXd* const> params, std::span<const Eigen::MatrixXd> grads,
                AdamWState& state, const TrainConfig& config) {
  if (params.size() != grads.size()) {
    throw DimensionMismatch("adamw: " + std::to_string(params.size()) + " tensors but " +
                            std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()) {
      throw DimensionMismatch("adamw: gradient shape mismatch for tensor " + std::to_string(i));
    }
    if (!grads[i].allFinite()) {
      throw NumericalError("adamw: non-finite gradient in tensor " + std::to_string(i));
    }
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (auto* p : params) {
      state.m.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      state.v.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  const double lr = config.learning_rate;
  const double decay = 1.0 - lr * config.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    auto& p = *params[i];
    p *= decay;
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config.epsilon);
  }
}

}  // namespace emoprobe
