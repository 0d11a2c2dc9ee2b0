#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "emoprobe/dataset.hpp"
#include "emoprobe/probe.hpp"

namespace emoprobe {

struct ProbeSweepRow {
  std::string model_tag;
  Task task = Task::ser;
  int layer = 1;  // 1-based
  double val_ua = 0.0;
  double test_ua = 0.0;
  std::array<double, kNumEmotions> recall{};
  int epoch_of_best = 0;
  std::vector<double> val_ua_history;
};

// One independent probe per layer on time-pooled features of the task's
// domain. Layers run on up to `jobs` threads; output order is by layer.
std::vector<ProbeSweepRow> layerwise_probe_sweep(std::span<const EmbeddingRecord> records,
                                                 const DatasetManifest& manifest, Task task,
                                                 const TrainConfig& config, int jobs = 1);

}  // namespace emoprobe
