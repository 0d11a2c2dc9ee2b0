#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emoprobe/dataset.hpp"
#include "emoprobe/encoder.hpp"
#include "emoprobe/embedding_store.hpp"
#include "emoprobe/pipelines.hpp"
#include "emoprobe/trainer.hpp"

namespace emoprobe {

enum class Approach { baseline, ws, peft };

std::string_view to_string(Approach a);
Approach parse_approach(std::string_view s);

// PEFT runs the mini encoder over the frames of one stored layer.
// model_dim = 0 takes the embedding dim; ffn_dim = 0 means 2 * model_dim.
struct PeftSettings {
  MiniEncoderConfig encoder{2, 0, 2, 0, 0, false};
  AdapterConfig adapters;
  std::size_t input_layer = 0;  // 0-based stored layer fed to the encoder
};

struct StagePlan {
  Approach approach = Approach::baseline;
  Task source = Task::ser;
  Task target = Task::mer;
  TrainConfig stage_one;
  TrainConfig stage_two;
  std::filesystem::path checkpoint_path;  // empty keeps the checkpoint in memory only
  PeftSettings peft;
  std::uint64_t init_seed = 0;  // adapter initialisation

  // 300 epochs per stage; lr 1e-3 for baseline/ws and 1e-4 for peft.
  static StagePlan make(Approach approach, Task source, Task target);
  void validate() const;
};

// Named tensors plus a hash of the structural configuration they belong to.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  double val_ua = 0.0;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// A model for one approach, sized for stored embeddings with L layers of dim D.
struct ApproachModel {
  std::unique_ptr<Model> model;
  InputKind input = InputKind::pooled_stack;
  std::size_t input_layer = 0;
  std::string structure;        // canonical JSON of the structural config
  std::uint64_t config_hash = 0;  // FNV-1a of `structure`
};

ApproachModel make_approach_model(const StagePlan& plan, std::size_t num_layers, std::size_t dim);

// Copies the model's trainable tensors under their names.
Checkpoint make_checkpoint(ApproachModel& m, double val_ua);
// Throws CheckpointMismatch when the hash, names or shapes disagree.
void apply_checkpoint(ApproachModel& m, const Checkpoint& checkpoint);

struct StageOneResult {
  Checkpoint checkpoint;
  MetricsReport source_test;
  FitResult fit;
};

struct StageTwoResult {
  MetricsReport target_test;
  FitResult fit;
};

// Trains on the source task and keeps the best-val snapshot; writes it to
// plan.checkpoint_path when one is set.
StageOneResult run_stage_one(const StagePlan& plan, std::span<const EmbeddingRecord> records,
                             const DatasetManifest& manifest);

// Loads the checkpoint into a fresh model of the same structure and keeps
// training the same tensors on the target task with a fresh optimizer.
StageTwoResult run_stage_two(const StagePlan& plan, const Checkpoint& checkpoint,
                             std::span<const EmbeddingRecord> records, const DatasetManifest& manifest);

// Single-stage reference: the same approach trained from init on the target
// task for stage_two.epochs.
StageTwoResult run_from_scratch(const StagePlan& plan, std::span<const EmbeddingRecord> records,
                                const DatasetManifest& manifest);

struct ModelData {
  std::string model_tag;
  std::vector<EmbeddingRecord> records;
  DatasetManifest manifest;
};

struct GridSpec {
  std::vector<Approach> approaches = {Approach::baseline, Approach::ws, Approach::peft};
  std::vector<std::pair<Task, Task>> directions = {{Task::ser, Task::mer}, {Task::mer, Task::ser}};
  std::uint64_t seed = 0;     // cell i uses seed + i
  int epochs = 300;           // per stage
  double learning_rate = 0;   // 0 keeps the per-approach default
  int batch_size = 32;
  PeftSettings peft;
  std::filesystem::path checkpoint_dir;  // empty: checkpoints stay in memory
  bool with_scratch = true;
};

struct AdaptationRow {
  std::string model_tag;
  Approach approach = Approach::baseline;
  Task source = Task::ser;
  Task target = Task::mer;
  std::uint64_t seed = 0;
  double stage1_ua = 0.0;   // source test UA
  double stage2_ua = 0.0;   // target test UA after two stages
  double scratch_ua = 0.0;  // target test UA trained on the target alone
  std::string error;        // set when the cell failed; UAs are NaN then

  std::string direction() const;
};

// One row per (model, approach, direction), in that nesting order. Failed
// cells keep their row with the error text.
std::vector<AdaptationRow> adaptation_grid(std::span<const ModelData> models, const GridSpec& grid, int jobs = 1);

}  // namespace emoprobe
