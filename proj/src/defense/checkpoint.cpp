#include "advpurify/defense/checkpoint.hpp"

#include "advpurify/core/errors.hpp"
#include "advpurify/datasets/tensor_io.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace advpurify::defense {

nlohmann::json TrainingManifest::to_json() const {
  return {{"dataset_fingerprint", dataset_fingerprint},
          {"attack_kinds", attack_kinds},
          {"pairs", pairs},
          {"epochs", epochs},
          {"seed", seed}};
}

TrainingManifest TrainingManifest::from_json(const nlohmann::json& j) {
  TrainingManifest m;
  m.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
  m.attack_kinds = j.at("attack_kinds").get<std::vector<std::string>>();
  m.pairs = j.at("pairs").get<std::int64_t>();
  m.epochs = j.at("epochs").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

void save_defense(const std::filesystem::path& path, const DefenseCheckpoint& ckpt) {
  if (!ckpt.generator || !ckpt.discriminator) throw ConfigError("defense checkpoint has no networks");
  nlohmann::json header = {
      {"kind", "defense"},
      {"format_version", ckpt.format_version},
      {"id", ckpt.id},
      {"generator", ckpt.generator_config.to_json()},
      {"discriminator", ckpt.discriminator_config.to_json()},
      {"perceptual", ckpt.perceptual_config.to_json()},
      {"loss_weights", {{"lambda1", ckpt.loss_weights.lambda1}, {"lambda2", ckpt.loss_weights.lambda2}}},
      {"training_manifest", ckpt.manifest.to_json()},
  };
  auto tensors = datasets::module_state(*ckpt.generator, "generator.");
  auto d_state = datasets::module_state(*ckpt.discriminator, "discriminator.");
  tensors.insert(tensors.end(), std::make_move_iterator(d_state.begin()), std::make_move_iterator(d_state.end()));
  datasets::write_checkpoint_file(path, header, tensors);
}

DefenseCheckpoint load_defense(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingArtifactError(
        fmt::format("defense checkpoint '{}' does not exist (produce it with train-defense)", path.string()));
  }
  auto file = datasets::read_checkpoint_file(path);
  const auto& h = file.header;
  if (h.value("kind", "") != "defense") throw FormatError(fmt::format("'{}' is not a defense checkpoint", path.string()));
  const auto version = h.at("format_version").get<std::uint32_t>();
  if (version != kDefenseFormatVersion) {
    throw FormatError(fmt::format("defense checkpoint version {} is not supported (expected {})", version,
                                  kDefenseFormatVersion));
  }
  DefenseCheckpoint ckpt;
  ckpt.id = h.at("id").get<std::string>();
  ckpt.format_version = version;
  ckpt.generator_config = GeneratorConfig::from_json(h.at("generator"));
  ckpt.discriminator_config = DiscriminatorConfig::from_json(h.at("discriminator"));
  ckpt.perceptual_config = PerceptualConfig::from_json(h.at("perceptual"));
  ckpt.loss_weights.lambda1 = h.at("loss_weights").at("lambda1").get<double>();
  ckpt.loss_weights.lambda2 = h.at("loss_weights").at("lambda2").get<double>();
  ckpt.manifest = TrainingManifest::from_json(h.at("training_manifest"));
  ckpt.generator = Generator(ckpt.generator_config);
  ckpt.discriminator = Discriminator(ckpt.discriminator_config);
  datasets::load_module_state(*ckpt.generator, file.tensors, "generator.");
  datasets::load_module_state(*ckpt.discriminator, file.tensors, "discriminator.");
  ckpt.generator->eval();
  ckpt.discriminator->eval();
  for (auto& p : ckpt.generator->parameters()) p.requires_grad_(false);
  for (auto& p : ckpt.discriminator->parameters()) p.requires_grad_(false);
  return ckpt;
}

ImageBatch reconstruct(const DefenseCheckpoint& ckpt, const ImageBatch& x) {
  if (!ckpt.generator) throw ConfigError("defense checkpoint has no generator");
  if (x.shape() != ckpt.generator_config.input_shape) {
    throw ShapeError(fmt::format("defense expects {} images, got {}", ckpt.generator_config.input_shape.to_string(),
                                 x.shape().to_string()));
  }
  if (ckpt.generator->is_training()) throw ConfigError("reconstruct needs the generator in eval mode");
  torch::NoGradGuard no_grad;
  constexpr std::int64_t kChunk = 256;
  std::vector<torch::Tensor> parts;
  for (std::int64_t start = 0; start < x.size(); start += kChunk) {
    const auto end = std::min(x.size(), start + kChunk);
    parts.push_back(ckpt.generator.ptr()->forward(x.tensor().slice(0, start, end)));
  }
  auto out = torch::cat(parts, 0).clamp(0.0, 1.0).contiguous();
  if (!torch::isfinite(out).all().item<bool>()) throw CorruptTensorError("generator produced non-finite pixels");
  return trusted_batch(out);
}

}  // namespace advpurify::defense
