#include "emoprobe/adaptation.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "binary_io.hpp"
#include "emoprobe/error.hpp"
#include "emoprobe/parallel.hpp"

namespace emoprobe {

namespace {

constexpr std::string_view kCheckpointMagic{"EMOCKPT\x01", 8};

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

MiniEncoderConfig resolve_encoder(const PeftSettings& peft, std::size_t dim) {
  MiniEncoderConfig cfg = peft.encoder;
  if (cfg.model_dim == 0) cfg.model_dim = static_cast<int>(dim);
  if (cfg.ffn_dim == 0) cfg.ffn_dim = 2 * cfg.model_dim;
  if (static_cast<std::size_t>(cfg.model_dim) != dim) {
    throw ConfigError("PEFT encoder model_dim " + std::to_string(cfg.model_dim) + " does not match embedding dim " +
                      std::to_string(dim));
  }
  cfg.validate();
  return cfg;
}

SplitSets load_sets(const ApproachModel& m, std::span<const EmbeddingRecord> records, const DatasetManifest& manifest,
                    Task task) {
  const Domain domain = domain_of(task);
  auto sets = build_split_sets(records, manifest, domain, m.input, m.input_layer);
  for (Split s : {Split::train, Split::val, Split::test}) {
    if (sets[s].empty()) {
      throw InsufficientData(std::string(to_string(task)) + " has no " + std::string(to_string(domain)) +
                             " records in the " + std::string(to_string(s)) + " split");
    }
  }
  return sets;
}

std::pair<std::size_t, std::size_t> shape_of(std::span<const EmbeddingRecord> records) {
  if (records.empty()) throw InsufficientData("no embedding records");
  return {records.front().num_layers(), records.front().dim()};
}

}  // namespace

std::string_view to_string(Approach a) {
  switch (a) {
    case Approach::baseline: return "baseline";
    case Approach::ws: return "ws";
    case Approach::peft: return "peft";
  }
  return "?";
}

Approach parse_approach(std::string_view s) {
  if (s == "baseline") return Approach::baseline;
  if (s == "ws") return Approach::ws;
  if (s == "peft") return Approach::peft;
  throw ConfigError("unknown approach '" + std::string(s) + "' (expected baseline, ws or peft)");
}

StagePlan StagePlan::make(Approach approach, Task source, Task target) {
  StagePlan p;
  p.approach = approach;
  p.source = source;
  p.target = target;
  const double lr = approach == Approach::peft ? 1e-4 : 1e-3;
  for (TrainConfig* c : {&p.stage_one, &p.stage_two}) {
    c->epochs = 300;
    c->learning_rate = lr;
  }
  return p;
}

void StagePlan::validate() const {
  if (source == target) throw ConfigError("source and target task must differ");
  stage_one.validate();
  stage_two.validate();
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u64(checkpoint.config_hash);
  w.f64(checkpoint.val_ua);
  w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& [name, t] : checkpoint.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) w.f64(t.data()[i]);
  }
  detail::write_file_bytes(path.string(), w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path.string());
  detail::ByteReader r(bytes.data(), bytes.size(), "checkpoint " + path.string());
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw FormatError("checkpoint " + path.string() + ": bad magic");
  }
  Checkpoint c;
  c.config_hash = r.u64();
  c.val_ua = r.f64();
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str(4096);
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (static_cast<std::uint64_t>(rows) * cols * 8 > r.size() - r.pos()) r.fail("tensor " + name + " is truncated");
    Eigen::MatrixXd t(rows, cols);
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = r.f64();
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (r.pos() != r.size()) r.fail("trailing bytes");
  return c;
}

ApproachModel make_approach_model(const StagePlan& plan, std::size_t num_layers, std::size_t dim) {
  ApproachModel m;
  nlohmann::json s;
  s["approach"] = to_string(plan.approach);
  s["classes"] = kNumEmotions;
  s["stored_layers"] = num_layers;
  s["dim"] = dim;
  const auto D = static_cast<Eigen::Index>(dim);
  switch (plan.approach) {
    case Approach::baseline:
      m.model = std::make_unique<StackModel>(
          AggregatorParams::make(AggregationMode::layer_mean, static_cast<int>(num_layers)), ProbeParams::zeros(D));
      m.input = InputKind::pooled_stack;
      break;
    case Approach::ws:
      m.model = std::make_unique<StackModel>(
          AggregatorParams::make(AggregationMode::weighted_sum, static_cast<int>(num_layers)), ProbeParams::zeros(D));
      m.input = InputKind::pooled_stack;
      break;
    case Approach::peft: {
      if (plan.peft.input_layer >= num_layers) {
        throw ConfigError("PEFT input layer " + std::to_string(plan.peft.input_layer + 1) + " exceeds the " +
                          std::to_string(num_layers) + " stored layers");
      }
      const auto cfg = resolve_encoder(plan.peft, dim);
      auto encoder = std::make_shared<const FrozenEncoder>(FrozenEncoder::init(cfg));
      s["input_layer"] = plan.peft.input_layer;
      s["encoder"] = {{"num_layers", cfg.num_layers}, {"model_dim", cfg.model_dim}, {"num_heads", cfg.num_heads},
                      {"ffn_dim", cfg.ffn_dim}, {"seed", cfg.seed}, {"positional", cfg.positional},
                      {"checksum", encoder->checksum()}};
      s["adapters"] = {{"lora_rank", plan.peft.adapters.lora_rank},
                       {"lora_alpha", plan.peft.adapters.lora_alpha},
                       {"bottleneck_dim", plan.peft.adapters.bottleneck_dim}};
      auto adapters = AdapterParams::init(cfg, plan.peft.adapters, plan.init_seed);
      m.model = std::make_unique<PeftPipeline>(
          peft_assemble(std::move(encoder), std::move(adapters),
                        AggregatorParams::make(AggregationMode::weighting_gate, cfg.num_layers), ProbeParams::zeros(D)));
      m.input = InputKind::sequence;
      m.input_layer = plan.peft.input_layer;
      break;
    }
  }
  m.structure = s.dump();
  m.config_hash = fnv1a(m.structure);
  return m;
}

Checkpoint make_checkpoint(ApproachModel& m, double val_ua) {
  Checkpoint c;
  c.config_hash = m.config_hash;
  c.val_ua = val_ua;
  for (const auto& p : m.model->trainable()) c.tensors.emplace_back(p.name, *p.value);
  return c;
}

void apply_checkpoint(ApproachModel& m, const Checkpoint& checkpoint) {
  if (checkpoint.config_hash != m.config_hash) {
    throw CheckpointMismatch("checkpoint config hash " + std::to_string(checkpoint.config_hash) +
                             " does not match model config " + m.structure);
  }
  auto params = m.model->trainable();
  if (params.size() != checkpoint.tensors.size()) {
    throw CheckpointMismatch("checkpoint holds " + std::to_string(checkpoint.tensors.size()) + " tensors, model has " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = checkpoint.tensors[i];
    if (name != params[i].name || t.rows() != params[i].value->rows() || t.cols() != params[i].value->cols()) {
      throw CheckpointMismatch("checkpoint tensor " + name + " does not match model tensor " + params[i].name);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = checkpoint.tensors[i].second;
}

StageOneResult run_stage_one(const StagePlan& plan, std::span<const EmbeddingRecord> records,
                             const DatasetManifest& manifest) {
  plan.validate();
  const auto [L, D] = shape_of(records);
  auto m = make_approach_model(plan, L, D);
  const auto sets = load_sets(m, records, manifest, plan.source);
  StageOneResult out;
  out.fit = fit(*m.model, sets.train, sets.val, plan.stage_one);
  out.source_test = evaluate_model(*m.model, sets.test);
  out.checkpoint = make_checkpoint(m, out.fit.val_report.ua);
  if (!plan.checkpoint_path.empty()) save_checkpoint(out.checkpoint, plan.checkpoint_path);
  return out;
}

StageTwoResult run_stage_two(const StagePlan& plan, const Checkpoint& checkpoint,
                             std::span<const EmbeddingRecord> records, const DatasetManifest& manifest) {
  plan.validate();
  const auto [L, D] = shape_of(records);
  auto m = make_approach_model(plan, L, D);
  apply_checkpoint(m, checkpoint);
  const auto sets = load_sets(m, records, manifest, plan.target);
  StageTwoResult out;
  out.fit = fit(*m.model, sets.train, sets.val, plan.stage_two);
  out.target_test = evaluate_model(*m.model, sets.test);
  return out;
}

StageTwoResult run_from_scratch(const StagePlan& plan, std::span<const EmbeddingRecord> records,
                                const DatasetManifest& manifest) {
  plan.validate();
  const auto [L, D] = shape_of(records);
  auto m = make_approach_model(plan, L, D);
  const auto sets = load_sets(m, records, manifest, plan.target);
  StageTwoResult out;
  out.fit = fit(*m.model, sets.train, sets.val, plan.stage_two);
  out.target_test = evaluate_model(*m.model, sets.test);
  return out;
}

std::string AdaptationRow::direction() const {
  return std::string(to_string(source)) + "->" + std::string(to_string(target));
}

std::vector<AdaptationRow> adaptation_grid(std::span<const ModelData> models, const GridSpec& grid, int jobs) {
  std::vector<AdaptationRow> rows;
  for (const auto& md : models) {
    for (Approach a : grid.approaches) {
      for (const auto& [src, tgt] : grid.directions) {
        AdaptationRow row;
        row.model_tag = md.model_tag;
        row.approach = a;
        row.source = src;
        row.target = tgt;
        row.seed = grid.seed + rows.size();
        rows.push_back(std::move(row));
      }
    }
  }
  if (!grid.checkpoint_dir.empty()) std::filesystem::create_directories(grid.checkpoint_dir);

  const std::size_t per_model = grid.approaches.size() * grid.directions.size();
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    auto& row = rows[i];
    const auto& md = models[i / per_model];
    try {
      auto plan = StagePlan::make(row.approach, row.source, row.target);
      for (TrainConfig* c : {&plan.stage_one, &plan.stage_two}) {
        c->epochs = grid.epochs;
        c->batch_size = grid.batch_size;
        c->seed = row.seed;
        if (grid.learning_rate > 0) c->learning_rate = grid.learning_rate;
      }
      plan.peft = grid.peft;
      plan.init_seed = row.seed;
      if (!grid.checkpoint_dir.empty()) {
        plan.checkpoint_path = grid.checkpoint_dir / (row.model_tag + "_" + std::string(to_string(row.approach)) + "_" +
                                                      std::string(to_string(row.source)) + "-" +
                                                      std::string(to_string(row.target)) + ".ckpt");
      }
      const auto one = run_stage_one(plan, md.records, md.manifest);
      const auto ckpt = plan.checkpoint_path.empty() ? one.checkpoint : load_checkpoint(plan.checkpoint_path);
      row.stage1_ua = one.source_test.ua;
      row.stage2_ua = run_stage_two(plan, ckpt, md.records, md.manifest).target_test.ua;
      row.scratch_ua = grid.with_scratch ? run_from_scratch(plan, md.records, md.manifest).target_test.ua
                                         : std::numeric_limits<double>::quiet_NaN();
    } catch (const Error& e) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.stage1_ua = row.stage2_ua = row.scratch_ua = nan;
      row.error = e.what();
    }
  });
  return rows;
}

}  // namespace emoprobe
