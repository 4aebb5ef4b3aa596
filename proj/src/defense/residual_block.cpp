#include "advpurify/defense/networks.hpp"

#include "advpurify/core/errors.hpp"

namespace advpurify::defense {

namespace nn = torch::nn;

ResidualBlockImpl::ResidualBlockImpl(std::int64_t channels, double negative_slope) : channels(channels) {
  if (channels < 1) throw ArchitectureError("residual block needs at least one channel");
  nn::AnyModule activation = negative_slope > 0.0
                                 ? nn::AnyModule(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(negative_slope)))
                                 : nn::AnyModule(nn::ReLU());
  body = register_module(
      "body", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1).bias(false)),
                             nn::BatchNorm2d(channels), activation,
                             nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1).bias(false)),
                             nn::BatchNorm2d(channels)));
}

torch::Tensor ResidualBlockImpl::residual(const torch::Tensor& x) {
  return body->forward(x);
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto fx = residual(x);
  if (fx.sizes() != x.sizes()) throw ArchitectureError("residual branch changed the feature-map shape");
  return fx + x;
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t total = 0;
  for (const auto& p : module.parameters()) total += p.numel();
  return total;
}

}  // namespace advpurify::defense
