#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emoprobe/adaptation.hpp"
#include "emoprobe/adamw.hpp"
#include "emoprobe/fad.hpp"

namespace emoprobe {

struct ProbeSettings {
  TrainConfig train;
  std::vector<Task> tasks = {Task::ser, Task::mer};
};

struct ExperimentConfig {
  std::map<std::string, std::filesystem::path> embedding_paths;  // model_tag -> file
  std::uint64_t split_seed = 0;
  std::filesystem::path output_dir;  // empty: fall back to EMOPROBE_OUT, then ./emoprobe_out
  int jobs = 1;
  ProbeSettings probe;
  GridSpec adaptation;
  FadOptions fad;
};

// Relative embedding and output paths resolve against `base_dir`.
ExperimentConfig experiment_config_from_json(const std::string& text, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

inline constexpr const char* kOutputDirEnv = "EMOPROBE_OUT";

// Exit codes: 0 success, 1 runtime failure, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace emoprobe
