#include "emoprobe/probe_sweep.hpp"

#include "emoprobe/error.hpp"
#include "emoprobe/parallel.hpp"

namespace emoprobe {

namespace {

struct Stacked {
  std::vector<Eigen::MatrixXd> pooled;  // per record, L x D
  std::vector<int> labels;
};

Eigen::MatrixXd layer_rows(const Stacked& s, Eigen::Index layer) {
  const Eigen::Index D = s.pooled.empty() ? 0 : s.pooled.front().cols();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(s.pooled.size()), D);
  for (std::size_t i = 0; i < s.pooled.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = s.pooled[i].row(layer);
  return out;
}

}  // namespace

std::vector<ProbeSweepRow> layerwise_probe_sweep(std::span<const EmbeddingRecord> records,
                                                 const DatasetManifest& manifest, Task task,
                                                 const TrainConfig& config, int jobs) {
  const Domain domain = domain_of(task);
  auto sets = build_split_sets(records, manifest, domain, InputKind::pooled_stack);
  for (Split s : {Split::train, Split::val, Split::test}) {
    if (sets[s].empty()) {
      throw InsufficientData(std::string(to_string(task)) + " has no " + std::string(to_string(domain)) +
                             " records in the " + std::string(to_string(s)) + " split");
    }
  }
  std::string tag;
  for (const auto& r : records) {
    if (r.domain == domain) {
      tag = r.model_tag;
      break;
    }
  }
  const Stacked train{std::move(sets.train.inputs), std::move(sets.train.labels)};
  const Stacked val{std::move(sets.val.inputs), std::move(sets.val.labels)};
  const Stacked test{std::move(sets.test.inputs), std::move(sets.test.labels)};
  const auto num_layers = static_cast<std::size_t>(train.pooled.front().rows());

  std::vector<ProbeSweepRow> rows(num_layers);
  parallel_for(num_layers, jobs, [&](std::size_t l) {
    const auto layer = static_cast<Eigen::Index>(l);
    auto trained = train_probe(layer_rows(train, layer), train.labels, layer_rows(val, layer), val.labels, config);
    const auto report = evaluate(trained.best, layer_rows(test, layer), test.labels);
    auto& row = rows[l];
    row.model_tag = tag;
    row.task = task;
    row.layer = static_cast<int>(l) + 1;
    row.val_ua = trained.fit.val_report.ua;
    row.test_ua = report.ua;
    row.recall = report.per_class_recall;
    row.epoch_of_best = trained.fit.val_report.epoch_of_best;
    row.val_ua_history = std::move(trained.fit.val_ua_history);
  });
  return rows;
}

}  // namespace emoprobe
