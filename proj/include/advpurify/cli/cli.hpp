#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace advpurify::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,          // bad flags or configuration
  kMissingInput = 3,   // missing dataset or prerequisite artifact
  kBadFile = 4,        // corrupt or incompatible file
  kDiverged = 5,
};

// Settings shared by every command. Defaults are overridden by a JSON config
// file (--config), which is overridden by explicit flags.
struct RunConfig {
  std::string command;
  std::string dataset = "mnist";
  std::uint64_t seed = 0;
  std::string run_dir;  // default runs/<dataset>-seed<seed>
  std::int64_t subset_size = 2000;
  std::int64_t test_subset = 1000;
  std::string split = "train";
  std::string tag;      // dataset tag, defaults to the split
  std::string name;     // checkpoint or report name, command-specific default
  std::string arch = "ConvNet-A";
  int epochs = 40;
  int defense_epochs = 15;
  std::int64_t batch_size = 64;
  std::vector<std::string> attacks;
  std::optional<double> epsilon;  // dataset default when unset
  std::int64_t iters = 40;
  double alpha = 0.01;
  double cw_c = 10.0;
  std::int64_t cw_steps = 100;
  double cw_lr = 0.1;
  std::string mode = "cross-product";
  std::string checkpoint;
  std::string classifier;
  std::int64_t blocks = 7;
  std::int64_t base_channels = 32;
  double dropout = 0.5;
  double lambda1 = 100.0;
  double lambda2 = 1.0;
  bool png_roundtrip = false;
  bool overwrite = false;
  std::vector<std::string> targets;
  std::vector<double> sweep_eps;
  std::vector<std::int64_t> sweep_iters;
  std::vector<std::int64_t> ablation_blocks;
  std::string held_out = "DEEPFOOL";

  double effective_epsilon() const;
  std::filesystem::path root() const;
  nlohmann::json to_json() const;
  // Applies every key present in `j`; unknown keys are a ConfigError.
  void merge(const nlohmann::json& j);
};

// Parses argv and runs one command. Never throws; errors map to ExitCode.
int run(int argc, const char* const* argv);

}  // namespace advpurify::cli
