#include "advpurify/core/errors.hpp"
#include "advpurify/defense/networks.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace advpurify::defense {

namespace nn = torch::nn;

namespace {

std::int64_t level_channels(const GeneratorConfig& cfg, std::int64_t level) {
  return std::min(cfg.base_channels << (level - 1), cfg.max_channels);
}

// Pix2pix places dropout on the three innermost decoder blocks.
constexpr std::int64_t kDropoutDecoders = 3;

}  // namespace

GeneratorConfig GeneratorConfig::desk(ImageShape shape) {
  GeneratorConfig cfg;
  cfg.input_shape = shape;
  cfg.encoder_blocks = (shape.height % 8 == 0 && shape.width % 8 == 0) ? 3 : 2;
  cfg.decoder_blocks = cfg.encoder_blocks - 1;
  cfg.base_channels = 32;
  return cfg;
}

GeneratorConfig GeneratorConfig::full_scale() {
  GeneratorConfig cfg;
  cfg.input_shape = {3, 256, 256};
  cfg.encoder_blocks = 8;
  cfg.decoder_blocks = 7;
  cfg.base_channels = 64;
  cfg.max_channels = 512;
  return cfg;
}

void GeneratorConfig::validate() const {
  if (encoder_blocks < 1 || encoder_blocks > 12) throw ArchitectureError("encoder_blocks must lie in [1, 12]");
  if (decoder_blocks != encoder_blocks - 1) {
    throw ArchitectureError(fmt::format("decoder_blocks must be encoder_blocks - 1 = {}, got {}", encoder_blocks - 1,
                                        decoder_blocks));
  }
  if (residual_blocks < 0) throw ArchitectureError("residual_blocks must be >= 0");
  if (base_channels < 1 || max_channels < base_channels) throw ArchitectureError("invalid channel widths");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ArchitectureError("dropout_rate must lie in [0, 1)");
  if (input_shape.channels != 1 && input_shape.channels != 3) throw ArchitectureError("images need 1 or 3 channels");
  const std::int64_t factor = std::int64_t{1} << encoder_blocks;
  if (input_shape.height % factor != 0 || input_shape.width % factor != 0) {
    throw ArchitectureError(fmt::format("input {} is not divisible by 2^{} = {}", input_shape.to_string(),
                                        encoder_blocks, factor));
  }
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"encoder_blocks", encoder_blocks},
          {"decoder_blocks", decoder_blocks},
          {"residual_blocks", residual_blocks},
          {"base_channels", base_channels},
          {"max_channels", max_channels},
          {"dropout_rate", dropout_rate},
          {"input_shape", {input_shape.channels, input_shape.height, input_shape.width}}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig cfg;
  cfg.encoder_blocks = j.at("encoder_blocks").get<std::int64_t>();
  cfg.decoder_blocks = j.at("decoder_blocks").get<std::int64_t>();
  cfg.residual_blocks = j.at("residual_blocks").get<std::int64_t>();
  cfg.base_channels = j.at("base_channels").get<std::int64_t>();
  cfg.max_channels = j.at("max_channels").get<std::int64_t>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  const auto dims = j.at("input_shape").get<std::vector<std::int64_t>>();
  cfg.input_shape = {dims.at(0), dims.at(1), dims.at(2)};
  cfg.validate();
  return cfg;
}

GeneratorImpl::GeneratorImpl(const GeneratorConfig& cfg) : config(cfg) {
  config.validate();
  const auto depth = config.encoder_blocks;
  const auto image_channels = config.input_shape.channels;

  for (std::int64_t level = 1; level <= depth; ++level) {
    const auto in = level == 1 ? image_channels : level_channels(config, level - 1);
    const auto out = level_channels(config, level);
    nn::Sequential block(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1).bias(level == 1)));
    if (level > 1) block->push_back(nn::BatchNorm2d(out));
    block->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    encoders.push_back(register_module(fmt::format("enc{}", level), block));

    std::vector<ResidualBlock> level_residuals;
    for (std::int64_t r = 0; r < config.residual_blocks; ++r) {
      level_residuals.push_back(register_module(fmt::format("enc{}_res{}", level, r + 1), ResidualBlock(out)));
    }
    residuals.push_back(std::move(level_residuals));
  }

  // decoders[0] is the innermost; the decoder for level j restores the
  // resolution of encoder level j and feeds the concat with its output.
  for (std::int64_t level = depth - 1; level >= 1; --level) {
    const auto in = level == depth - 1 ? level_channels(config, depth) : 2 * level_channels(config, level + 1);
    const auto out = level_channels(config, level);
    nn::Sequential block(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1).bias(false)),
                         nn::BatchNorm2d(out), nn::ReLU());
    if (static_cast<std::int64_t>(decoders.size()) < kDropoutDecoders && config.dropout_rate > 0.0) {
      block->push_back(nn::Dropout(config.dropout_rate));
    }
    decoders.push_back(register_module(fmt::format("dec{}", level), block));
  }

  const auto final_in = depth == 1 ? level_channels(config, 1) : 2 * level_channels(config, 1);
  output_layer = register_module(
      "output", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(final_in, image_channels, 4).stride(2).padding(1)));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) {
  const auto& s = config.input_shape;
  if (x.dim() != 4 || x.size(1) != s.channels || x.size(2) != s.height || x.size(3) != s.width) {
    throw ShapeError(fmt::format("generator expects (N, {}, {}, {}) input", s.channels, s.height, s.width));
  }
  std::vector<torch::Tensor> skips;
  auto h = x;
  for (std::size_t level = 0; level < encoders.size(); ++level) {
    h = encoders[level]->forward(h);
    for (auto& block : residuals[level]) h = block->forward(h);
    skips.push_back(h);
  }
  auto d = skips.back();
  for (std::size_t j = 0; j < decoders.size(); ++j) {
    d = decoders[j]->forward(d);
    d = torch::cat({d, skips[skips.size() - 2 - j]}, 1);
  }
  return torch::sigmoid(output_layer->forward(d));
}

std::vector<std::string> GeneratorImpl::describe() const {
  std::vector<std::string> lines;
  const auto depth = config.encoder_blocks;
  for (std::int64_t level = 1; level <= depth; ++level) {
    const auto in = level == 1 ? config.input_shape.channels : level_channels(config, level - 1);
    lines.push_back(fmt::format("enc{} conv4x4/2 {}->{}", level, in, level_channels(config, level)));
    for (std::int64_t r = 1; r <= config.residual_blocks; ++r) {
      lines.push_back(fmt::format("enc{}.res{} {}", level, r, level_channels(config, level)));
    }
  }
  for (std::int64_t level = depth - 1; level >= 1; --level) {
    lines.push_back(fmt::format("dec{} deconv4x4/2 ->{} +skip(enc{})", level, level_channels(config, level), level));
  }
  lines.push_back(fmt::format("output deconv4x4/2 ->{} sigmoid", config.input_shape.channels));
  return lines;
}

std::vector<ResidualBlock> GeneratorImpl::residual_modules() const {
  std::vector<ResidualBlock> all;
  for (const auto& level : residuals) all.insert(all.end(), level.begin(), level.end());
  return all;
}

}  // namespace advpurify::defense
