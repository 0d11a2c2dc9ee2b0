#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emoprobe/trainer.hpp"

namespace emoprobe {

// Linear softmax classifier: logits = W x + b, C = 6 classes.
struct ProbeParams {
  Eigen::MatrixXd W;  // C x D
  Eigen::MatrixXd b;  // C x 1

  static ProbeParams zeros(Eigen::Index dim, Eigen::Index classes = kNumEmotions);
  Eigen::Index dim() const { return W.cols(); }
  Eigen::Index classes() const { return W.rows(); }
};

struct ProbeLoss {
  double loss = 0.0;
  Eigen::MatrixXd logits;  // N x C
};

struct ProbeGradients {
  Eigen::MatrixXd W;
  Eigen::MatrixXd b;
};

// features is N x D; the loss is the batch mean of -log softmax(logits)[label].
ProbeLoss forward_loss(const ProbeParams& params, const Eigen::MatrixXd& features, const std::vector<int>& labels);
ProbeGradients probe_gradients(const ProbeParams& params, const Eigen::MatrixXd& features,
                               const std::vector<int>& labels);

MetricsReport evaluate(const ProbeParams& params, const Eigen::MatrixXd& features, const std::vector<int>& labels);

// Model adapter over a ProbeParams; inputs are D x 1 columns.
class ProbeModel final : public Model {
 public:
  explicit ProbeModel(ProbeParams params) : params_(std::move(params)) {}

  std::vector<ParamRef> trainable() override;
  Eigen::VectorXd logits(const Eigen::MatrixXd& input) const override;
  double accumulate(const Eigen::MatrixXd& input, int label, double weight,
                    std::vector<Eigen::MatrixXd>& grads) const override;

  const ProbeParams& params() const { return params_; }
  ProbeParams& params() { return params_; }

 private:
  ProbeParams params_;
};

// Rows of `features` become D x 1 inputs.
LabeledSet rows_as_set(const Eigen::MatrixXd& features, const std::vector<int>& labels);

struct ProbeTrainResult {
  ProbeParams best;
  FitResult fit;
};

// Zero-initialised probe trained on (train_x, train_y) with val-UA checkpointing.
ProbeTrainResult train_probe(const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                             const Eigen::MatrixXd& val_x, const std::vector<int>& val_y, const TrainConfig& config);

}  // namespace emoprobe
