#pragma once

#include "advpurify/core/types.hpp"
#include "advpurify/defense/losses.hpp"
#include "advpurify/defense/networks.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace advpurify::defense {

inline constexpr std::uint32_t kDefenseFormatVersion = 1;

struct TrainingManifest {
  std::string dataset_fingerprint;
  std::vector<std::string> attack_kinds;
  std::int64_t pairs = 0;
  int epochs = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static TrainingManifest from_json(const nlohmann::json& j);
};

struct DefenseCheckpoint {
  std::string id = "defense";
  GeneratorConfig generator_config;
  DiscriminatorConfig discriminator_config;
  PerceptualConfig perceptual_config;
  LossWeights loss_weights;
  TrainingManifest manifest;
  std::uint32_t format_version = kDefenseFormatVersion;

  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
};

void save_defense(const std::filesystem::path& path, const DefenseCheckpoint& checkpoint);
// Throws MissingArtifactError when the file is absent and FormatError when it
// is not a defense checkpoint of a supported version.
DefenseCheckpoint load_defense(const std::filesystem::path& path);

// Runs the generator in inference mode (dropout off, running BN statistics).
// Safe for concurrent callers once the checkpoint is in eval mode, which
// load_defense and train_defense guarantee.
ImageBatch reconstruct(const DefenseCheckpoint& checkpoint, const ImageBatch& x);

}  // namespace advpurify::defense
