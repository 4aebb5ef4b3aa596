#pragma once

#include "advpurify/core/types.hpp"
#include "advpurify/defense/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace advpurify::defense {

struct DefenseTrainConfig {
  int epochs = 10;
  std::int64_t batch_size = 64;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  // Per-epoch JSONL loss records are appended here when set.
  std::optional<std::filesystem::path> log_path;

  void validate() const;
  nlohmann::json to_json() const;
};

// Batch means of each loss, averaged over the epoch.
struct EpochLog {
  int epoch = 0;
  double l1 = 0.0;
  double perceptual = 0.0;
  double gen_adv = 0.0;
  double disc = 0.0;
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

struct TrainingResult {
  DefenseCheckpoint checkpoint;
  std::vector<EpochLog> history;
  double wall_seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Alternates one discriminator step (minimizing the discriminator loss with
// the attacked image as condition) and one generator step (minimizing the
// weighted objective against the clean target) per batch. Throws DataError on
// an empty or mismatched dataset and DivergenceError on a non-finite loss.
TrainingResult train_defense(const ImageBatch& attacked, const ImageBatch& clean, const GeneratorConfig& gcfg,
                             const DiscriminatorConfig& dcfg, const PerceptualLoss& perceptual,
                             const LossWeights& weights, const DefenseTrainConfig& tcfg, TrainingManifest manifest,
                             const EpochCallback& on_epoch = {});

}  // namespace advpurify::defense
