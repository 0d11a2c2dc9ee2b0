#include "emoprobe/pooling.hpp"

#include <cmath>
#include <string>

#include "emoprobe/error.hpp"

namespace emoprobe {

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double peak = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - peak).exp();
  return e / e.sum();
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& logits) {
  Eigen::VectorXd out(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double x = logits(i);
    if (x >= 0) {
      out(i) = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double ex = std::exp(x);
      out(i) = ex / (1.0 + ex);
    }
  }
  return out;
}

AggregatorParams AggregatorParams::make(AggregationMode mode, Eigen::Index num_layers) {
  if (num_layers < 1) throw DimensionMismatch("aggregator needs at least one layer");
  AggregatorParams p;
  p.mode = mode;
  p.layer_count = num_layers;
  if (mode != AggregationMode::layer_mean) p.ws_logits = Eigen::MatrixXd::Zero(num_layers, 1);
  if (mode == AggregationMode::weighting_gate) p.gate_logits = Eigen::MatrixXd::Zero(num_layers, 1);
  return p;
}

Eigen::VectorXd AggregatorParams::weights() const {
  if (mode == AggregationMode::layer_mean) {
    return Eigen::VectorXd::Constant(layer_count, 1.0 / static_cast<double>(layer_count));
  }
  return softmax(ws_logits.col(0));
}

Eigen::VectorXd AggregatorParams::gates() const {
  if (mode != AggregationMode::weighting_gate) return Eigen::VectorXd::Ones(layer_count);
  return sigmoid(gate_logits.col(0));
}

Eigen::VectorXd AggregatorParams::effective_coefficients() const {
  if (mode == AggregationMode::layer_mean) return weights();
  return weights().cwiseProduct(gates());
}

Eigen::VectorXd mean_pool_time(const Eigen::MatrixXd& frames) {
  if (frames.rows() == 0) throw InsufficientData("cannot mean-pool zero frames");
  return frames.colwise().mean().transpose();
}

namespace {

void check_shape(const Eigen::MatrixXd& pooled, const AggregatorParams& params) {
  if (pooled.rows() != params.num_layers()) {
    throw DimensionMismatch("aggregator expects " + std::to_string(params.num_layers()) + " layers, got " +
                            std::to_string(pooled.rows()));
  }
}

}  // namespace

Eigen::VectorXd aggregate_layers(const Eigen::MatrixXd& pooled, const AggregatorParams& params) {
  check_shape(pooled, params);
  if (params.mode == AggregationMode::layer_mean) return pooled.colwise().mean().transpose();
  const Eigen::VectorXd coef = params.effective_coefficients();
  return pooled.transpose() * coef;
}

AggregatorGradients aggregate_backward(const Eigen::MatrixXd& pooled, const AggregatorParams& params,
                                       const Eigen::VectorXd& upstream) {
  check_shape(pooled, params);
  if (upstream.size() != pooled.cols()) {
    throw DimensionMismatch("upstream gradient has " + std::to_string(upstream.size()) + " entries, expected " +
                            std::to_string(pooled.cols()));
  }
  AggregatorGradients g;
  const Eigen::VectorXd coef = params.effective_coefficients();
  g.pooled = coef * upstream.transpose();
  if (params.mode == AggregationMode::layer_mean) return g;

  // s_l = <layer_l, upstream>; output . upstream = sum_l w_l gamma_l s_l.
  const Eigen::VectorXd s = pooled * upstream;
  const Eigen::VectorXd w = params.weights();
  const Eigen::VectorXd gamma = params.gates();
  const Eigen::VectorXd gs = gamma.cwiseProduct(s);
  const double mixed = w.dot(gs);
  g.ws_logits = w.cwiseProduct((gs.array() - mixed).matrix());
  if (params.mode == AggregationMode::weighting_gate) {
    g.gate_logits = w.cwiseProduct(gamma).cwiseProduct((1.0 - gamma.array()).matrix()).cwiseProduct(s);
  }
  return g;
}

}  // namespace emoprobe
