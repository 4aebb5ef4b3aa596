#pragma once

#include "advpurify/core/types.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <string>
#include <vector>

namespace advpurify::defense {

// y = F(x) + x with F = conv3x3 -> BN -> act -> conv3x3 -> BN.
struct ResidualBlockImpl : torch::nn::Module {
  ResidualBlockImpl(std::int64_t channels, double negative_slope = 0.0);

  torch::Tensor forward(const torch::Tensor& x);
  // F(x) alone.
  torch::Tensor residual(const torch::Tensor& x);

  std::int64_t channels;
  torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(ResidualBlock);

struct GeneratorConfig {
  // Each encoder block halves H and W. The 256x256 layout uses 8 encoder and
  // 7 decoder blocks; the 28x28 desk layout uses 2 and 1.
  std::int64_t encoder_blocks = 2;
  std::int64_t decoder_blocks = 1;  // excludes the final output layer
  std::int64_t residual_blocks = 7;  // after every encoder block
  std::int64_t base_channels = 16;
  std::int64_t max_channels = 128;
  double dropout_rate = 0.5;
  ImageShape input_shape{1, 28, 28};

  static GeneratorConfig desk(ImageShape shape);
  static GeneratorConfig full_scale();

  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

// U-Net: encoder level i is concatenated into the decoder level that
// restores its resolution; the output passes through a sigmoid so it is a
// valid image.
struct GeneratorImpl : torch::nn::Module {
  explicit GeneratorImpl(const GeneratorConfig& config);

  torch::Tensor forward(const torch::Tensor& x);
  // One line per block, e.g. "enc1 conv4x4/2 1->16", "enc1.res3 16".
  std::vector<std::string> describe() const;
  std::vector<ResidualBlock> residual_modules() const;

  GeneratorConfig config;
  std::vector<torch::nn::Sequential> encoders;
  std::vector<std::vector<ResidualBlock>> residuals;
  std::vector<torch::nn::Sequential> decoders;
  torch::nn::ConvTranspose2d output_layer{nullptr};
};
TORCH_MODULE(Generator);

struct DiscriminatorConfig {
  std::int64_t conv_layers = 2;
  std::int64_t residual_blocks = 7;  // after every strided conv layer
  std::int64_t base_channels = 16;
  std::int64_t max_channels = 128;
  ImageShape input_shape{1, 28, 28};

  static DiscriminatorConfig desk(ImageShape shape);
  // (h', w') of the per-patch score grid.
  std::pair<std::int64_t, std::int64_t> patch_grid() const;

  void validate() const;
  nlohmann::json to_json() const;
  static DiscriminatorConfig from_json(const nlohmann::json& j);
};

// PatchGAN over the channel-concatenated (condition, candidate) pair. forward
// returns per-patch logits (N, 1, h', w'); scores() applies the sigmoid.
struct DiscriminatorImpl : torch::nn::Module {
  explicit DiscriminatorImpl(const DiscriminatorConfig& config);

  torch::Tensor forward(const torch::Tensor& condition, const torch::Tensor& candidate);
  torch::Tensor scores(const torch::Tensor& condition, const torch::Tensor& candidate);

  DiscriminatorConfig config;
  torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(Discriminator);

std::int64_t parameter_count(const torch::nn::Module& module);

}  // namespace advpurify::defense
