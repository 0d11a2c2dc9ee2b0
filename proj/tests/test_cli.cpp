#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "emoprobe/cli.hpp"
#include "emoprobe/error.hpp"
#include "emoprobe/synthetic.hpp"
#include "test_util.hpp"

using namespace emoprobe;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "emoprobe");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Every regular file under `a` exists under `b` with identical bytes.
void check_same_tree(const fs::path& a, const fs::path& b) {
  int files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    INFO(rel.string());
    CHECK(slurp(entry.path()) == slurp(b / rel));
    ++files;
  }
  CHECK(files > 0);
}

// Values of the polyline tagged `series` in an SVG.
std::vector<double> series_values(const std::string& svg, const std::string& series) {
  const auto tag = svg.find("data-series=\"" + series + "\"");
  REQUIRE(tag != std::string::npos);
  const auto start = svg.find("data-y=\"", tag) + 8;
  const auto stop = svg.find('"', start);
  std::istringstream in(svg.substr(start, stop - start));
  std::vector<double> v;
  for (double x; in >> x;) v.push_back(x);
  return v;
}

}  // namespace

TEST_CASE("cli usage errors exit with 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"probe"}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"probe", "--config", "x.json", "--bogus"}).code == 2);
  CHECK(cli({"probe", "--config", "x.json", "--epochs", "0"}).code == 2);
  CHECK(cli({"--help"}).code == 0);

  const auto dir = testing::scratch_dir("cli_usage");
  spit(dir / "empty.json", R"({"embedding_paths": {}})");
  const auto none = cli({"probe", "--config", (dir / "empty.json").string()});
  CHECK(none.code == 2);
  CHECK(none.err.find("no models") != std::string::npos);
  spit(dir / "one.json", R"({"embedding_paths": {"m": "m.emb"}})");
  CHECK(cli({"fad", "--config", (dir / "one.json").string(), "--models", ""}).code == 2);
  CHECK(cli({"fad", "--config", (dir / "one.json").string(), "--models", "other"}).code == 2);
}

TEST_CASE("cli runtime failures exit with 1") {
  const auto dir = testing::scratch_dir("cli_runtime");
  CHECK(cli({"probe", "--config", (dir / "missing.json").string()}).code == 1);
  spit(dir / "broken.json", "{not json");
  CHECK(cli({"probe", "--config", (dir / "broken.json").string()}).code == 1);
  spit(dir / "typo.json", R"({"embedding_paths": {"m": "m.emb"}, "probe": {"epoch": 3}})");
  const auto typo = cli({"probe", "--config", (dir / "typo.json").string()});
  CHECK(typo.code == 1);
  CHECK(typo.err.find("epoch") != std::string::npos);

  spit(dir / "one.json", R"({"embedding_paths": {"m": "m.emb"}})");
  const auto missing = cli({"probe", "--config", (dir / "one.json").string(), "--out", (dir / "out").string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("m.emb") != std::string::npos);
}

TEST_CASE("synth, validate and probe on the layer-3 fixture") {
  const auto dir = testing::scratch_dir("cli_probe");
  spit(dir / "synth.json", R"({
    "num_layers": 5, "num_frames": 2, "dim": 8, "count_per_class": 20, "coupling": 1.0,
    "layer_signal": [0, 0, 1, 0, 0], "model_tag": "toy",
    "blobs": {"separation": 8.0, "noise_std": 1.0, "domain_shift": 0.0}
  })");
  REQUIRE(cli({"synth", "--config", (dir / "synth.json").string(), "--seed", "5", "--out", (dir / "data").string()})
              .code == 0);
  const auto lint = cli({"validate", (dir / "data" / "toy.emb").string()});
  CHECK(lint.code == 0);
  CHECK(lint.out.find("240 records") != std::string::npos);

  const auto config = (dir / "data" / "experiment.json").string();
  for (const char* run : {"r1", "r2"}) {
    const auto r = cli({"probe", "--config", config, "--epochs", "150", "--jobs", "2", "--out", (dir / run).string()});
    REQUIRE(r.code == 0);
  }
  const auto summary = slurp(dir / "r1" / "probe_summary.csv");
  CHECK(summary.find("toy,SER,Best,1.000000,3\n") != std::string::npos);
  CHECK(summary.find("toy,MER,Best,1.000000,3\n") != std::string::npos);
  check_same_tree(dir / "r1", dir / "r2");

  const auto layers = slurp(dir / "r1" / "probe_layers.csv");
  CHECK(std::count(layers.begin(), layers.end(), '\n') == 1 + 2 * 5);
  const auto svg = slurp(dir / "r1" / "probe_SER.svg");
  CHECK(series_values(svg, "toy").size() == 5);
}

TEST_CASE("validate flags corrupt files") {
  const auto dir = testing::scratch_dir("cli_validate");
  auto cfg = SyntheticConfig::blobs(2, 2, 6, 3, 2.0, 1.0, 0.0);
  const auto ds = generate_synthetic_manifest(cfg, 1);
  write_embedding_file(ds.records, dir / "ok.emb");
  auto bytes = slurp(dir / "ok.emb");
  spit(dir / "cut.emb", bytes.substr(0, bytes.size() / 2));
  const auto r = cli({"validate", (dir / "ok.emb").string(), (dir / "cut.emb").string()});
  CHECK(r.code == 1);
  CHECK(r.out.find("OK") != std::string::npos);
  CHECK(r.err.find("FAIL") != std::string::npos);
  CHECK(r.err.find("only 3 records") != std::string::npos);
}

TEST_CASE("fad command draws angry lowest over a 12-layer axis") {
  const auto dir = testing::scratch_dir("cli_fad");
  auto cfg = SyntheticConfig::blobs(12, 1, 8, 60, 3.0, 1.0, 0.0);
  for (Emotion e : kAllEmotions) {
    const auto k = static_cast<std::size_t>(index_of(e));
    cfg.music[k].mean = cfg.speech[k].mean;
    if (e != Emotion::angry) cfg.music[k].mean(7) += 10.0;
  }
  const auto ds = generate_synthetic_manifest(cfg, 3);
  write_embedding_file(ds.records, dir / "m.emb");
  spit(dir / "exp.json", R"({"embedding_paths": {"m": "m.emb"}, "output_dir": "out"})");

  REQUIRE(cli({"fad", "--config", (dir / "exp.json").string()}).code == 0);
  REQUIRE(cli({"fad", "--config", (dir / "exp.json").string(), "--out", (dir / "again").string()}).code == 0);
  const auto svg = slurp(dir / "out" / "fad_m.svg");
  CHECK(svg == slurp(dir / "again" / "fad_m.svg"));
  CHECK(slurp(dir / "out" / "fad.csv") == slurp(dir / "again" / "fad.csv"));

  for (int l = 1; l <= 12; ++l) CHECK(svg.find(">" + std::to_string(l) + "</text>") != std::string::npos);
  CHECK(svg.find(">13</text>") == std::string::npos);
  const auto angry = series_values(svg, "angry");
  REQUIRE(angry.size() == 12);
  for (const char* other : {"neutral", "calm", "happy", "sad", "fearful", "all"}) {
    const auto v = series_values(svg, other);
    for (std::size_t i = 0; i < 12; ++i) CHECK(angry[i] < v[i]);
  }
  const auto csv = slurp(dir / "out" / "fad.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 84);
}

TEST_CASE("adapt command writes six reproducible rows") {
  const auto dir = testing::scratch_dir("cli_adapt");
  const auto ds = generate_synthetic_manifest(SyntheticConfig::blobs(2, 2, 8, 10, 4.0, 1.0, 1.0), 2);
  write_embedding_file(ds.records, dir / "m.emb");
  spit(dir / "exp.json", R"({"embedding_paths": {"m": "m.emb"},
    "adaptation": {"epochs": 5, "seed": 7, "peft": {"num_layers": 1, "lora_rank": 2, "bottleneck_dim": 4}}})");
  REQUIRE(cli({"adapt", "--config", (dir / "exp.json").string(), "--out", (dir / "a").string()}).code == 0);
  REQUIRE(cli({"adapt", "--config", (dir / "exp.json").string(), "--out", (dir / "b").string(), "--jobs", "3"}).code ==
          0);
  check_same_tree(dir / "a", dir / "b");
  const auto csv = slurp(dir / "a" / "adaptation.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  CHECK(csv.find("m,peft,MER->SER,12,") != std::string::npos);
  CHECK(fs::exists(dir / "a" / "checkpoints" / "m_ws_SER-MER.ckpt"));
}

TEST_CASE("output directory falls back to the environment variable") {
  const auto dir = testing::scratch_dir("cli_env");
  const auto ds = generate_synthetic_manifest(SyntheticConfig::blobs(1, 1, 6, 6, 4.0, 1.0, 1.0), 2);
  write_embedding_file(ds.records, dir / "m.emb");
  spit(dir / "exp.json", R"({"embedding_paths": {"m": "m.emb"}})");
  ::setenv(kOutputDirEnv, (dir / "from_env").c_str(), 1);
  const auto r = cli({"fad", "--config", (dir / "exp.json").string()});
  ::unsetenv(kOutputDirEnv);
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "from_env" / "fad.csv"));
}

TEST_CASE("experiment config parsing") {
  const auto c = experiment_config_from_json(R"({
    "embedding_paths": {"hubert": "emb/hubert.emb", "abs": "/data/x.emb"},
    "split_seed": 9, "output_dir": "results", "jobs": 3,
    "probe": {"epochs": 50, "learning_rate": 0.01, "tasks": ["MER"]},
    "adaptation": {"approaches": ["peft"], "directions": ["MER->SER"], "scratch": false, "save_checkpoints": false,
                   "peft": {"input_layer": 4, "lora_rank": 4}},
    "fad": {"per_frame": true}
  })",
                                             "/cfg");
  CHECK(c.embedding_paths.at("hubert") == fs::path("/cfg/emb/hubert.emb"));
  CHECK(c.embedding_paths.at("abs") == fs::path("/data/x.emb"));
  CHECK(c.output_dir == fs::path("/cfg/results"));
  CHECK(c.split_seed == 9);
  CHECK(c.jobs == 3);
  CHECK(c.probe.train.epochs == 50);
  CHECK(c.probe.tasks == std::vector<Task>{Task::mer});
  CHECK(c.adaptation.approaches == std::vector<Approach>{Approach::peft});
  CHECK(c.adaptation.directions.front().first == Task::mer);
  CHECK_FALSE(c.adaptation.with_scratch);
  CHECK(c.adaptation.checkpoint_dir.empty());
  CHECK(c.adaptation.peft.input_layer == 3);
  CHECK(c.adaptation.peft.adapters.lora_rank == 4);
  CHECK(c.fad.per_frame);

  CHECK_THROWS_AS(experiment_config_from_json(R"({"adaptation": {"directions": ["SER->SER"]}})", ""), ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json(R"({"probe": {"tasks": ["ASR"]}})", ""), ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json(R"({"split_seed": "x"})", ""), ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json(R"({"adaptation": {"approaches": [3]}})", ""), ConfigError);
}
