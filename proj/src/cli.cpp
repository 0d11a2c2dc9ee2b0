#include "emoprobe/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "emoprobe/error.hpp"
#include "emoprobe/probe_sweep.hpp"
#include "emoprobe/report.hpp"
#include "emoprobe/synthetic.hpp"

namespace emoprobe {

namespace {

using nlohmann::json;

struct UsageError : Error {
  using Error::Error;
};

void check_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void read_train(const json& j, TrainConfig& t, const std::string& where) {
  read_opt(j, "epochs", t.epochs, where);
  read_opt(j, "learning_rate", t.learning_rate, where);
  read_opt(j, "batch_size", t.batch_size, where);
  read_opt(j, "weight_decay", t.weight_decay, where);
  read_opt(j, "seed", t.seed, where);
}

Task require_task(const std::string& s) {
  const auto t = parse_task(s);
  if (!t) throw ConfigError("unknown task '" + s + "' (expected SER or MER)");
  return *t;
}

std::pair<Task, Task> parse_direction(const std::string& s) {
  const auto arrow = s.find("->");
  if (arrow == std::string::npos) throw ConfigError("direction '" + s + "' must look like SER->MER");
  const Task a = require_task(s.substr(0, arrow));
  const Task b = require_task(s.substr(arrow + 2));
  if (a == b) throw ConfigError("direction '" + s + "' has the same source and target");
  return {a, b};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

// Flags shared by probe, adapt and fad.
struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> models;
  CLI::Option* models_option = nullptr;
  std::string out;
  std::optional<int> epochs;
  std::optional<int> jobs;
};

void add_run_flags(CLI::App* sub, RunFlags& f) {
  sub->add_option("--config", f.config, "experiment config JSON")->required();
  sub->add_option("--seed", f.seed, "override split and training seeds");
  f.models_option = sub->add_option("--models", f.models, "comma-separated model tags to run")->delimiter(',');
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--epochs", f.epochs, "override epochs (per stage for adapt)")->check(CLI::PositiveNumber);
  sub->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
}

struct Prepared {
  ExperimentConfig config;
  std::vector<std::string> models;
  std::filesystem::path out_dir;
};

Prepared prepare(const RunFlags& f) {
  Prepared p;
  p.config = load_experiment_config(f.config);
  auto& c = p.config;
  if (f.seed) {
    c.split_seed = *f.seed;
    c.probe.train.seed = *f.seed;
    c.adaptation.seed = *f.seed;
  }
  if (f.epochs) {
    c.probe.train.epochs = *f.epochs;
    c.adaptation.epochs = *f.epochs;
  }
  if (f.jobs) c.jobs = *f.jobs;
  c.fad.jobs = c.jobs;

  if (f.models_option->count() > 0) {
    for (const auto& m : f.models) {
      if (m.empty()) continue;
      if (!c.embedding_paths.contains(m)) throw UsageError("model '" + m + "' is not in the config's embedding_paths");
      p.models.push_back(m);
    }
  } else {
    for (const auto& [tag, path] : c.embedding_paths) p.models.push_back(tag);
  }
  if (p.models.empty()) throw UsageError("no models selected");

  if (!f.out.empty()) {
    p.out_dir = f.out;
  } else if (!c.output_dir.empty()) {
    p.out_dir = c.output_dir;
  } else if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') {
    p.out_dir = env;
  } else {
    p.out_dir = "emoprobe_out";
  }
  std::filesystem::create_directories(p.out_dir);
  return p;
}

struct Loaded {
  std::vector<EmbeddingRecord> records;
  DatasetManifest manifest;
};

Loaded load_model(const Prepared& p, const std::string& tag) {
  Loaded l;
  l.records = read_embedding_file(p.config.embedding_paths.at(tag));
  if (l.records.empty()) throw InsufficientData(tag + ": embedding file has no records");
  l.manifest = make_stratified_split(metadata_of(l.records), p.config.split_seed);
  write_text_file(p.out_dir / ("manifest_" + tag + ".json"), manifest_to_json(l.manifest));
  return l;
}

void write_table(const std::filesystem::path& dir, const std::string& stem, const Table& t) {
  write_text_file(dir / (stem + ".csv"), to_csv(t));
  write_text_file(dir / (stem + ".json"), to_json(t));
}

int cmd_probe(const RunFlags& f, std::ostream& out, std::ostream& err) {
  const auto p = prepare(f);
  std::vector<ProbeSweepRow> rows;
  bool failed = false;
  for (const auto& tag : p.models) {
    try {
      const auto data = load_model(p, tag);
      for (Task task : p.config.probe.tasks) {
        try {
          auto part = layerwise_probe_sweep(data.records, data.manifest, task, p.config.probe.train, p.config.jobs);
          for (auto& r : part) r.model_tag = tag;
          rows.insert(rows.end(), part.begin(), part.end());
        } catch (const Error& e) {
          err << "probe " << tag << " " << to_string(task) << ": " << e.what() << "\n";
          failed = true;
        }
      }
    } catch (const Error& e) {
      err << "probe " << tag << ": " << e.what() << "\n";
      failed = true;
    }
  }
  write_table(p.out_dir, "probe_layers", probe_layer_table(rows));
  const auto summary = probe_summary_table(rows);
  write_table(p.out_dir, "probe_summary", summary);
  for (Task task : p.config.probe.tasks) {
    write_text_file(p.out_dir / ("probe_" + std::string(to_string(task)) + ".svg"), render_svg(probe_chart(rows, task)));
  }
  out << to_csv(summary);
  return failed ? 1 : 0;
}

int cmd_adapt(const RunFlags& f, std::ostream& out, std::ostream& err) {
  const auto p = prepare(f);
  std::vector<ModelData> models;
  bool failed = false;
  for (const auto& tag : p.models) {
    try {
      auto data = load_model(p, tag);
      models.push_back({tag, std::move(data.records), std::move(data.manifest)});
    } catch (const Error& e) {
      err << "adapt " << tag << ": " << e.what() << "\n";
      failed = true;
    }
  }
  auto grid = p.config.adaptation;
  if (!grid.checkpoint_dir.empty()) grid.checkpoint_dir = p.out_dir / grid.checkpoint_dir;
  const auto rows = adaptation_grid(models, grid, p.config.jobs);
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      err << "adapt " << r.model_tag << " " << to_string(r.approach) << " " << r.direction() << ": " << r.error << "\n";
      failed = true;
    }
  }
  const auto table = adaptation_table(rows);
  write_table(p.out_dir, "adaptation", table);
  out << to_csv(table);
  return failed ? 1 : 0;
}

int cmd_fad(const RunFlags& f, std::ostream& out, std::ostream& err) {
  const auto p = prepare(f);
  std::vector<FadRow> rows;
  bool failed = false;
  for (const auto& tag : p.models) {
    try {
      const auto data = load_model(p, tag);
      auto part = fad_sweep(data.records, tag, p.config.fad);
      for (const auto& r : part) {
        if (!r.error.empty()) {
          err << "fad " << tag << " layer " << r.layer << " " << r.emotion << ": " << r.error << "\n";
          failed = true;
        }
      }
      write_text_file(p.out_dir / ("fad_" + tag + ".svg"), render_svg(fad_chart(part, tag)));
      rows.insert(rows.end(), part.begin(), part.end());
    } catch (const Error& e) {
      err << "fad " << tag << ": " << e.what() << "\n";
      failed = true;
    }
  }
  write_table(p.out_dir, "fad", fad_table(rows));
  out << "wrote " << rows.size() << " FAD rows to " << (p.out_dir / "fad.csv").string() << "\n";
  return failed ? 1 : 0;
}

int cmd_synth(const std::string& config_path, std::uint64_t seed, const std::string& out_flag, std::ostream& out) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) throw IoError("cannot open synthetic config " + config_path);
  std::stringstream text;
  text << in.rdbuf();
  const auto cfg = synthetic_config_from_json(text.str());
  std::filesystem::path dir = out_flag;
  if (dir.empty()) {
    const char* env = std::getenv(kOutputDirEnv);
    dir = env != nullptr && *env != '\0' ? env : "emoprobe_out";
  }
  std::filesystem::create_directories(dir);
  const auto ds = generate_synthetic_manifest(cfg, seed);
  const std::string file = cfg.model_tag + ".emb";
  write_embedding_file(ds.records, dir / file);
  write_text_file(dir / ("manifest_" + cfg.model_tag + ".json"), manifest_to_json(ds.manifest));
  nlohmann::ordered_json exp;
  exp["embedding_paths"] = {{cfg.model_tag, file}};
  exp["split_seed"] = seed;
  write_text_file(dir / "experiment.json", exp.dump(2) + "\n");
  out << "wrote " << ds.records.size() << " records to " << (dir / file).string() << "\n";
  return 0;
}

int cmd_validate(const std::vector<std::string>& files, std::ostream& out, std::ostream& err) {
  bool failed = false;
  for (const auto& path : files) {
    try {
      const auto header = read_embedding_header(path);
      const auto index = read_embedding_index(path);
      const auto records = read_embedding_file(path);
      if (index.size() != header.record_count || records.size() != header.record_count) {
        throw CorruptionError(path + ": header declares " + std::to_string(header.record_count) + " records, found " +
                              std::to_string(records.size()));
      }
      std::map<StratumKey, std::size_t> counts;
      for (const auto& r : records) ++counts[{r.domain, r.emotion}];
      out << "OK " << path << ": " << records.size() << " records, L=" << header.num_layers << ", D=" << header.dim
          << "\n";
      for (const auto& [key, n] : counts) {
        out << "  " << to_string(key.domain) << "/" << to_string(key.emotion) << ": " << n << "\n";
        if (n < 5) err << "warning " << path << ": stratum " << to_string(key.domain) << "/" << to_string(key.emotion)
                       << " has only " << n << " records\n";
      }
    } catch (const Error& e) {
      err << "FAIL " << path << ": " << e.what() << "\n";
      failed = true;
    }
  }
  return failed ? 1 : 0;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const std::string& text, const std::filesystem::path& base_dir) try {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config", {"embedding_paths", "split_seed", "output_dir", "jobs", "probe", "adaptation", "fad"});
  ExperimentConfig c;
  if (j.contains("embedding_paths") && !j["embedding_paths"].is_object()) {
    throw ConfigError("embedding_paths must map model tags to file paths");
  }
  std::map<std::string, std::string> paths;
  read_opt(j, "embedding_paths", paths, "config");
  for (const auto& [tag, path] : paths) c.embedding_paths[tag] = resolve(base_dir, path);
  read_opt(j, "split_seed", c.split_seed, "config");
  std::string out_dir;
  read_opt(j, "output_dir", out_dir, "config");
  if (!out_dir.empty()) c.output_dir = resolve(base_dir, out_dir);
  read_opt(j, "jobs", c.jobs, "config");
  if (c.jobs < 1) throw ConfigError("config.jobs must be >= 1");

  if (j.contains("probe")) {
    const auto& pj = j["probe"];
    check_keys(pj, "probe", {"epochs", "learning_rate", "batch_size", "weight_decay", "seed", "tasks"});
    read_train(pj, c.probe.train, "probe");
    if (pj.contains("tasks")) {
      c.probe.tasks.clear();
      for (const auto& t : pj["tasks"]) c.probe.tasks.push_back(require_task(t.get<std::string>()));
    }
  }
  c.probe.train.validate();

  auto& g = c.adaptation;
  g.checkpoint_dir = "checkpoints";
  if (j.contains("adaptation")) {
    const auto& aj = j["adaptation"];
    check_keys(aj, "adaptation", {"epochs", "learning_rate", "batch_size", "seed", "approaches", "directions",
                                  "scratch", "save_checkpoints", "peft"});
    read_opt(aj, "epochs", g.epochs, "adaptation");
    read_opt(aj, "learning_rate", g.learning_rate, "adaptation");
    read_opt(aj, "batch_size", g.batch_size, "adaptation");
    read_opt(aj, "seed", g.seed, "adaptation");
    read_opt(aj, "scratch", g.with_scratch, "adaptation");
    bool save = true;
    read_opt(aj, "save_checkpoints", save, "adaptation");
    if (!save) g.checkpoint_dir.clear();
    if (aj.contains("approaches")) {
      g.approaches.clear();
      for (const auto& a : aj["approaches"]) g.approaches.push_back(parse_approach(a.get<std::string>()));
    }
    if (aj.contains("directions")) {
      g.directions.clear();
      for (const auto& d : aj["directions"]) g.directions.push_back(parse_direction(d.get<std::string>()));
    }
    if (aj.contains("peft")) {
      const auto& pj = aj["peft"];
      check_keys(pj, "adaptation.peft", {"num_layers", "num_heads", "ffn_dim", "encoder_seed", "positional",
                                         "lora_rank", "lora_alpha", "bottleneck_dim", "input_layer"});
      auto& e = g.peft.encoder;
      read_opt(pj, "num_layers", e.num_layers, "adaptation.peft");
      read_opt(pj, "num_heads", e.num_heads, "adaptation.peft");
      read_opt(pj, "ffn_dim", e.ffn_dim, "adaptation.peft");
      read_opt(pj, "encoder_seed", e.seed, "adaptation.peft");
      read_opt(pj, "positional", e.positional, "adaptation.peft");
      read_opt(pj, "lora_rank", g.peft.adapters.lora_rank, "adaptation.peft");
      read_opt(pj, "lora_alpha", g.peft.adapters.lora_alpha, "adaptation.peft");
      read_opt(pj, "bottleneck_dim", g.peft.adapters.bottleneck_dim, "adaptation.peft");
      std::size_t layer = 1;
      read_opt(pj, "input_layer", layer, "adaptation.peft");
      if (layer < 1) throw ConfigError("adaptation.peft.input_layer is 1-based");
      g.peft.input_layer = layer - 1;
    }
  }
  if (g.epochs < 1 || g.batch_size < 1 || g.learning_rate < 0) {
    throw ConfigError("adaptation epochs and batch_size must be >= 1 and learning_rate >= 0");
  }

  if (j.contains("fad")) {
    check_keys(j["fad"], "fad", {"per_frame"});
    read_opt(j["fad"], "per_frame", c.fad.per_frame, "fad");
  }
  return c;
} catch (const json::exception& e) {
  throw ConfigError(std::string("experiment config: ") + e.what());
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return experiment_config_from_json(text.str(), path.parent_path());
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Layerwise emotion probing, cross-domain adaptation and FAD on cached audio embeddings", "emoprobe"};
  app.require_subcommand(1);

  RunFlags probe_flags, adapt_flags, fad_flags;
  auto* probe = app.add_subcommand("probe", "layerwise linear probes for SER and MER");
  add_run_flags(probe, probe_flags);
  auto* adapt = app.add_subcommand("adapt", "two-stage cross-domain adaptation grid");
  add_run_flags(adapt, adapt_flags);
  auto* fad = app.add_subcommand("fad", "per-layer, per-emotion speech vs music FAD");
  add_run_flags(fad, fad_flags);

  std::string synth_config, synth_out;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "write a synthetic embedding fixture");
  synth->add_option("--config", synth_config, "synthetic fixture JSON")->required();
  synth->add_option("--seed", synth_seed, "generator and split seed");
  synth->add_option("--out", synth_out, "output directory");

  std::vector<std::string> files;
  auto* validate = app.add_subcommand("validate", "lint embedding files");
  validate->add_option("files", files, "embedding files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*probe) return cmd_probe(probe_flags, out, err);
    if (*adapt) return cmd_adapt(adapt_flags, out, err);
    if (*fad) return cmd_fad(fad_flags, out, err);
    if (*synth) return cmd_synth(synth_config, synth_seed, synth_out, out);
    if (*validate) return cmd_validate(files, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace emoprobe
