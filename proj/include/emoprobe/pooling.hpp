#pragma once

#include <Eigen/Dense>

namespace emoprobe {

enum class AggregationMode { layer_mean, weighted_sum, weighting_gate };

// Learnable layer aggregation. Logits are stored as L x 1 matrices so they
// plug straight into the optimizer's tensor list.
struct AggregatorParams {
  AggregationMode mode = AggregationMode::layer_mean;
  Eigen::MatrixXd ws_logits;    // L x 1, weighted_sum and weighting_gate
  Eigen::MatrixXd gate_logits;  // L x 1, weighting_gate only

  // Zero logits: uniform weights, gates at 0.5.
  static AggregatorParams make(AggregationMode mode, Eigen::Index num_layers);

  Eigen::Index num_layers() const { return layer_count; }
  Eigen::VectorXd weights() const;  // softmax(ws_logits); uniform for layer_mean
  Eigen::VectorXd gates() const;    // sigmoid(gate_logits); ones unless weighting_gate
  // Per-layer multiplier applied to each pooled layer.
  Eigen::VectorXd effective_coefficients() const;

  Eigen::Index layer_count = 0;
};

struct AggregatorGradients {
  Eigen::MatrixXd ws_logits;    // empty for layer_mean
  Eigen::MatrixXd gate_logits;  // empty unless weighting_gate
  Eigen::MatrixXd pooled;       // L x D, gradient w.r.t. the pooled layers
};

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
Eigen::VectorXd sigmoid(const Eigen::VectorXd& logits);

// Frame-axis mean of a T x D slice. Throws InsufficientData when T == 0.
Eigen::VectorXd mean_pool_time(const Eigen::MatrixXd& frames);

// pooled_layers is L x D.
Eigen::VectorXd aggregate_layers(const Eigen::MatrixXd& pooled_layers, const AggregatorParams& params);

AggregatorGradients aggregate_backward(const Eigen::MatrixXd& pooled_layers, const AggregatorParams& params,
                                       const Eigen::VectorXd& upstream);

}  // namespace emoprobe
