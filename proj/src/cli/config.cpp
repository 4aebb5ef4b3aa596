#include "advpurify/cli/cli.hpp"

#include "advpurify/core/errors.hpp"

#include <fmt/format.h>

namespace advpurify::cli {

double RunConfig::effective_epsilon() const {
  if (epsilon) return *epsilon;
  // MNIST-style digits are attacked at 0.3; natural images at 16/255.
  return dataset == "cifar10" ? 16.0 / 255.0 : 0.3;
}

std::filesystem::path RunConfig::root() const {
  if (!run_dir.empty()) return run_dir;
  return std::filesystem::path("runs") / fmt::format("{}-seed{}", dataset, seed);
}

nlohmann::json RunConfig::to_json() const {
  return {{"command", command},
          {"dataset", dataset},
          {"seed", seed},
          {"run_dir", root().string()},
          {"subset_size", subset_size},
          {"test_subset", test_subset},
          {"split", split},
          {"tag", tag},
          {"name", name},
          {"arch", arch},
          {"epochs", epochs},
          {"defense_epochs", defense_epochs},
          {"batch_size", batch_size},
          {"attack", attacks},
          {"epsilon", effective_epsilon()},
          {"iters", iters},
          {"alpha", alpha},
          {"cw_c", cw_c},
          {"cw_steps", cw_steps},
          {"cw_lr", cw_lr},
          {"mode", mode},
          {"checkpoint", checkpoint},
          {"classifier", classifier},
          {"blocks", blocks},
          {"base_channels", base_channels},
          {"dropout", dropout},
          {"lambda1", lambda1},
          {"lambda2", lambda2},
          {"png_roundtrip", png_roundtrip},
          {"overwrite", overwrite},
          {"targets", targets},
          {"sweep_eps", sweep_eps},
          {"sweep_iters", sweep_iters},
          {"ablation_blocks", ablation_blocks},
          {"held_out", held_out}};
}

void RunConfig::merge(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("a config file must hold a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "command") continue;
      else if (key == "dataset") dataset = value.get<std::string>();
      else if (key == "seed") seed = value.get<std::uint64_t>();
      else if (key == "run_dir") run_dir = value.get<std::string>();
      else if (key == "subset_size") subset_size = value.get<std::int64_t>();
      else if (key == "test_subset") test_subset = value.get<std::int64_t>();
      else if (key == "split") split = value.get<std::string>();
      else if (key == "tag") tag = value.get<std::string>();
      else if (key == "name") name = value.get<std::string>();
      else if (key == "arch") arch = value.get<std::string>();
      else if (key == "epochs") epochs = value.get<int>();
      else if (key == "defense_epochs") defense_epochs = value.get<int>();
      else if (key == "batch_size") batch_size = value.get<std::int64_t>();
      else if (key == "attack") attacks = value.get<std::vector<std::string>>();
      else if (key == "epsilon") epsilon = value.get<double>();
      else if (key == "iters") iters = value.get<std::int64_t>();
      else if (key == "alpha") alpha = value.get<double>();
      else if (key == "cw_c") cw_c = value.get<double>();
      else if (key == "cw_steps") cw_steps = value.get<std::int64_t>();
      else if (key == "cw_lr") cw_lr = value.get<double>();
      else if (key == "mode") mode = value.get<std::string>();
      else if (key == "checkpoint") checkpoint = value.get<std::string>();
      else if (key == "classifier") classifier = value.get<std::string>();
      else if (key == "blocks") blocks = value.get<std::int64_t>();
      else if (key == "base_channels") base_channels = value.get<std::int64_t>();
      else if (key == "dropout") dropout = value.get<double>();
      else if (key == "lambda1") lambda1 = value.get<double>();
      else if (key == "lambda2") lambda2 = value.get<double>();
      else if (key == "png_roundtrip") png_roundtrip = value.get<bool>();
      else if (key == "overwrite") overwrite = value.get<bool>();
      else if (key == "targets") targets = value.get<std::vector<std::string>>();
      else if (key == "sweep_eps") sweep_eps = value.get<std::vector<double>>();
      else if (key == "sweep_iters") sweep_iters = value.get<std::vector<std::int64_t>>();
      else if (key == "ablation_blocks") ablation_blocks = value.get<std::vector<std::int64_t>>();
      else if (key == "held_out") held_out = value.get<std::string>();
      else throw ConfigError(fmt::format("unknown config key '{}'", key));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad config value: {}", e.what()));
  }
}

}  // namespace advpurify::cli
