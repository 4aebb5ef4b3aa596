#include "advpurify/core/errors.hpp"
#include "advpurify/defense/networks.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace advpurify::defense {

namespace nn = torch::nn;

DiscriminatorConfig DiscriminatorConfig::desk(ImageShape shape) {
  DiscriminatorConfig cfg;
  cfg.input_shape = shape;
  return cfg;
}

std::pair<std::int64_t, std::int64_t> DiscriminatorConfig::patch_grid() const {
  const std::int64_t factor = std::int64_t{1} << conv_layers;
  return {input_shape.height / factor, input_shape.width / factor};
}

void DiscriminatorConfig::validate() const {
  if (conv_layers < 1 || conv_layers > 8) throw ArchitectureError("conv_layers must lie in [1, 8]");
  if (residual_blocks < 0) throw ArchitectureError("residual_blocks must be >= 0");
  if (base_channels < 1 || max_channels < base_channels) throw ArchitectureError("invalid channel widths");
  const std::int64_t factor = std::int64_t{1} << conv_layers;
  if (input_shape.height % factor != 0 || input_shape.width % factor != 0) {
    throw ArchitectureError(fmt::format("discriminator input {} is not divisible by 2^{}", input_shape.to_string(),
                                        conv_layers));
  }
}

nlohmann::json DiscriminatorConfig::to_json() const {
  return {{"conv_layers", conv_layers},
          {"residual_blocks", residual_blocks},
          {"base_channels", base_channels},
          {"max_channels", max_channels},
          {"input_shape", {input_shape.channels, input_shape.height, input_shape.width}}};
}

DiscriminatorConfig DiscriminatorConfig::from_json(const nlohmann::json& j) {
  DiscriminatorConfig cfg;
  cfg.conv_layers = j.at("conv_layers").get<std::int64_t>();
  cfg.residual_blocks = j.at("residual_blocks").get<std::int64_t>();
  cfg.base_channels = j.at("base_channels").get<std::int64_t>();
  cfg.max_channels = j.at("max_channels").get<std::int64_t>();
  const auto dims = j.at("input_shape").get<std::vector<std::int64_t>>();
  cfg.input_shape = {dims.at(0), dims.at(1), dims.at(2)};
  cfg.validate();
  return cfg;
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& cfg) : config(cfg) {
  config.validate();
  body = nn::Sequential();
  auto in = 2 * config.input_shape.channels;
  for (std::int64_t layer = 1; layer <= config.conv_layers; ++layer) {
    const auto out = std::min(config.base_channels << (layer - 1), config.max_channels);
    body->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1).bias(layer == 1)));
    if (layer > 1) body->push_back(nn::BatchNorm2d(out));
    body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    for (std::int64_t r = 0; r < config.residual_blocks; ++r) body->push_back(ResidualBlock(out, 0.2));
    in = out;
  }
  body->push_back(nn::Conv2d(nn::Conv2dOptions(in, 1, 3).padding(1)));
  register_module("body", body);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& condition, const torch::Tensor& candidate) {
  if (condition.sizes() != candidate.sizes()) throw ShapeError("discriminator inputs differ in shape");
  return body->forward(torch::cat({condition, candidate}, 1));
}

torch::Tensor DiscriminatorImpl::scores(const torch::Tensor& condition, const torch::Tensor& candidate) {
  return torch::sigmoid(forward(condition, candidate));
}

}  // namespace advpurify::defense
