#include "emoprobe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "emoprobe/error.hpp"

namespace emoprobe {

MetricsReport compute_metrics(const std::vector<int>& labels, const std::vector<int>& predictions) {
  if (labels.size() != predictions.size()) throw DimensionMismatch("labels and predictions differ in length");
  MetricsReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const int p = predictions[i];
    if (y < 0 || y >= kNumEmotions || p < 0 || p >= kNumEmotions) {
      throw ValidationError("class index outside 0..5");
    }
    ++r.confusion[y][p];
  }
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < kNumEmotions; ++c) {
    long row = 0;
    for (long v : r.confusion[c]) row += v;
    if (row == 0) {
      r.per_class_recall[c] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    r.per_class_recall[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(row);
    sum += r.per_class_recall[c];
    ++present;
  }
  r.ua = present > 0 ? sum / present : 0.0;
  return r;
}

int Model::predict(const Eigen::MatrixXd& input) const {
  const Eigen::VectorXd z = logits(input);
  Eigen::Index best = 0;
  z.maxCoeff(&best);
  return static_cast<int>(best);
}

double cross_entropy(const Eigen::VectorXd& logits, int label, Eigen::VectorXd* dlogits) {
  if (label < 0 || label >= logits.size()) {
    throw ValidationError("label " + std::to_string(label) + " outside 0.." + std::to_string(logits.size() - 1));
  }
  const double peak = logits.maxCoeff();
  const Eigen::VectorXd shifted = logits.array() - peak;
  const double log_norm = std::log(shifted.array().exp().sum());
  if (dlogits != nullptr) {
    *dlogits = (shifted.array() - log_norm).exp();
    (*dlogits)(label) -= 1.0;
  }
  return log_norm - shifted(label);
}

MetricsReport evaluate_model(const Model& model, const LabeledSet& data) {
  if (data.empty()) throw InsufficientData("cannot evaluate on an empty set");
  std::vector<int> preds;
  preds.reserve(data.size());
  for (const auto& x : data.inputs) preds.push_back(model.predict(x));
  return compute_metrics(data.labels, preds);
}

std::vector<Eigen::MatrixXd> snapshot(Model& model) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& p : model.trainable()) out.push_back(*p.value);
  return out;
}

void restore(Model& model, const std::vector<Eigen::MatrixXd>& state) {
  auto params = model.trainable();
  if (params.size() != state.size()) throw DimensionMismatch("snapshot does not match the trainable set");
  for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = state[i];
}

FitResult fit(Model& model, const LabeledSet& train, const LabeledSet& val, const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw InsufficientData("training set is empty");
  if (val.empty()) throw InsufficientData("validation set is empty");

  auto params = model.trainable();
  std::vector<Eigen::MatrixXd*> ptrs;
  std::vector<Eigen::MatrixXd> grads;
  for (const auto& p : params) {
    ptrs.push_back(p.value);
    grads.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
  }

  AdamWState state;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  FitResult result;
  std::vector<Eigen::MatrixXd> best = snapshot(model);
  double best_ua = -1.0;
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      const double weight = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grads) g.setZero();
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t k = order[i];
        epoch_loss += model.accumulate(train.inputs[k], train.labels[k], weight, grads);
      }
      adamw_step(ptrs, grads, state, config);
    }
    result.train_loss_history.push_back(epoch_loss / static_cast<double>(order.size()));

    MetricsReport report = evaluate_model(model, val);
    result.val_ua_history.push_back(report.ua);
    if (report.ua > best_ua) {
      best_ua = report.ua;
      best = snapshot(model);
      report.epoch_of_best = epoch;
      result.val_report = report;
    }
  }
  restore(model, best);
  return result;
}

}  // namespace emoprobe
