#include "emoprobe/probe.hpp"

#include <string>

#include "emoprobe/error.hpp"

namespace emoprobe {

ProbeParams ProbeParams::zeros(Eigen::Index dim, Eigen::Index classes) {
  return {Eigen::MatrixXd::Zero(classes, dim), Eigen::MatrixXd::Zero(classes, 1)};
}

namespace {

void check_batch(const ProbeParams& params, const Eigen::MatrixXd& features, const std::vector<int>& labels) {
  if (features.cols() != params.dim()) {
    throw DimensionMismatch("probe expects D=" + std::to_string(params.dim()) + ", features have D=" +
                            std::to_string(features.cols()));
  }
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw DimensionMismatch("feature rows and labels differ in count");
  }
  for (int y : labels) {
    if (y < 0 || y >= params.classes()) {
      throw ValidationError("label " + std::to_string(y) + " outside 0.." + std::to_string(params.classes() - 1));
    }
  }
}

}  // namespace

ProbeLoss forward_loss(const ProbeParams& params, const Eigen::MatrixXd& features, const std::vector<int>& labels) {
  check_batch(params, features, labels);
  if (labels.empty()) throw InsufficientData("empty batch");
  ProbeLoss out;
  out.logits = (features * params.W.transpose()).rowwise() + params.b.col(0).transpose();
  double total = 0.0;
  for (Eigen::Index i = 0; i < out.logits.rows(); ++i) {
    total += cross_entropy(out.logits.row(i).transpose(), labels[static_cast<std::size_t>(i)], nullptr);
  }
  out.loss = total / static_cast<double>(labels.size());
  return out;
}

ProbeGradients probe_gradients(const ProbeParams& params, const Eigen::MatrixXd& features,
                               const std::vector<int>& labels) {
  const auto fwd = forward_loss(params, features, labels);
  Eigen::MatrixXd dlogits(fwd.logits.rows(), fwd.logits.cols());
  Eigen::VectorXd d;
  for (Eigen::Index i = 0; i < fwd.logits.rows(); ++i) {
    cross_entropy(fwd.logits.row(i).transpose(), labels[static_cast<std::size_t>(i)], &d);
    dlogits.row(i) = d.transpose();
  }
  dlogits /= static_cast<double>(labels.size());
  return {dlogits.transpose() * features, dlogits.colwise().sum().transpose()};
}

MetricsReport evaluate(const ProbeParams& params, const Eigen::MatrixXd& features, const std::vector<int>& labels) {
  check_batch(params, features, labels);
  if (labels.empty()) throw InsufficientData("cannot evaluate on an empty test set");
  const Eigen::MatrixXd logits = (features * params.W.transpose()).rowwise() + params.b.col(0).transpose();
  std::vector<int> preds(labels.size());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    preds[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return compute_metrics(labels, preds);
}

std::vector<ParamRef> ProbeModel::trainable() { return {{"probe.W", &params_.W}, {"probe.b", &params_.b}}; }

Eigen::VectorXd ProbeModel::logits(const Eigen::MatrixXd& input) const {
  return params_.W * input.col(0) + params_.b.col(0);
}

double ProbeModel::accumulate(const Eigen::MatrixXd& input, int label, double weight,
                              std::vector<Eigen::MatrixXd>& grads) const {
  Eigen::VectorXd d;
  const double loss = cross_entropy(logits(input), label, &d);
  grads[0].noalias() += weight * d * input.col(0).transpose();
  grads[1].col(0) += weight * d;
  return loss;
}

LabeledSet rows_as_set(const Eigen::MatrixXd& features, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw DimensionMismatch("feature rows and labels differ in count");
  }
  LabeledSet s;
  s.labels = labels;
  s.inputs.reserve(labels.size());
  for (Eigen::Index i = 0; i < features.rows(); ++i) s.inputs.emplace_back(features.row(i).transpose());
  return s;
}

ProbeTrainResult train_probe(const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                             const Eigen::MatrixXd& val_x, const std::vector<int>& val_y, const TrainConfig& config) {
  if (train_y.empty()) throw InsufficientData("training set is empty");
  if (val_y.empty()) throw InsufficientData("validation set is empty");
  std::array<bool, kNumEmotions> seen{};
  for (int y : train_y) {
    if (y < 0 || y >= kNumEmotions) throw ValidationError("label " + std::to_string(y) + " outside 0..5");
    seen[static_cast<std::size_t>(y)] = true;
  }
  for (int c = 0; c < kNumEmotions; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) {
      throw InsufficientData("class '" + std::string(to_string(static_cast<Emotion>(c))) +
                             "' is missing from the training set");
    }
  }
  if (val_x.cols() != train_x.cols()) throw DimensionMismatch("train and val feature dims differ");

  ProbeModel model(ProbeParams::zeros(train_x.cols()));
  auto fitted = fit(model, rows_as_set(train_x, train_y), rows_as_set(val_x, val_y), config);
  return {model.params(), std::move(fitted)};
}

}  // namespace emoprobe
