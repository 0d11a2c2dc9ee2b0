#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emoprobe/adamw.hpp"
#include "emoprobe/labels.hpp"

namespace emoprobe {

struct MetricsReport {
  double ua = 0.0;
  // NaN for classes absent from the evaluated set.
  std::array<double, kNumEmotions> per_class_recall{};
  // confusion[true][predicted]
  std::array<std::array<long, kNumEmotions>, kNumEmotions> confusion{};
  int epoch_of_best = 0;
};

// UA is the mean recall over the classes present in `labels`.
MetricsReport compute_metrics(const std::vector<int>& labels, const std::vector<int>& predictions);

// Per-sample inputs with a class index each. What an input holds depends on
// the model: a D x 1 feature, an L x D pooled stack, or a T x D sequence.
struct LabeledSet {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

struct ParamRef {
  std::string name;
  Eigen::MatrixXd* value;
};

// A classifier with a trainable tensor set. The trainer owns the loop; the
// model supplies logits and per-sample gradients.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::vector<ParamRef> trainable() = 0;
  virtual Eigen::VectorXd logits(const Eigen::MatrixXd& input) const = 0;

  // Adds weight * d(cross-entropy)/d(param) into grads (ordered as trainable())
  // and returns the unweighted sample loss.
  virtual double accumulate(const Eigen::MatrixXd& input, int label, double weight,
                            std::vector<Eigen::MatrixXd>& grads) const = 0;

  int predict(const Eigen::MatrixXd& input) const;
};

// Softmax cross-entropy on one logit vector; writes d(loss)/d(logits) to dlogits.
double cross_entropy(const Eigen::VectorXd& logits, int label, Eigen::VectorXd* dlogits);

MetricsReport evaluate_model(const Model& model, const LabeledSet& data);

struct FitResult {
  MetricsReport val_report;           // best epoch's validation metrics
  std::vector<double> val_ua_history;  // one entry per epoch
  std::vector<double> train_loss_history;
};

// Runs config.epochs shuffled minibatch passes with AdamW, evaluating val UA
// after each. The model is left holding the best-val-UA snapshot (earliest
// epoch on ties). A fresh optimizer state is used per call.
FitResult fit(Model& model, const LabeledSet& train, const LabeledSet& val, const TrainConfig& config);

std::vector<Eigen::MatrixXd> snapshot(Model& model);
void restore(Model& model, const std::vector<Eigen::MatrixXd>& state);

}  // namespace emoprobe
