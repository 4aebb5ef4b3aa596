#include "advpurify/defense/losses.hpp"

#include "advpurify/core/errors.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace advpurify::defense {

namespace {

void check_scores(const torch::Tensor& scores) {
  if (scores.numel() == 0) throw ShapeError("empty score tensor");
  const auto lo = scores.min().item<double>();
  const auto hi = scores.max().item<double>();
  if (!(lo >= 0.0 && hi <= 1.0)) {
    throw DomainError(fmt::format("discriminator scores must lie in [0, 1], got range [{}, {}]", lo, hi));
  }
}

torch::Tensor guarded_log(const torch::Tensor& p) {
  return torch::log(p.clamp(kScoreGuard, 1.0 - kScoreGuard));
}

}  // namespace

torch::Tensor generator_adversarial_loss(const torch::Tensor& fake_scores) {
  check_scores(fake_scores);
  return -guarded_log(fake_scores).mean();
}

torch::Tensor discriminator_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  check_scores(real_scores);
  check_scores(fake_scores);
  return -(guarded_log(real_scores).mean() + guarded_log(1.0 - fake_scores).mean());
}

torch::Tensor generator_adversarial_loss_from_logits(const torch::Tensor& fake_logits) {
  return -torch::log_sigmoid(fake_logits).mean();
}

torch::Tensor discriminator_loss_from_logits(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
  // log(1 - sigmoid(z)) = log_sigmoid(-z)
  return -(torch::log_sigmoid(real_logits).mean() + torch::log_sigmoid(-fake_logits).mean());
}

torch::Tensor l1_pixel_loss(const torch::Tensor& target, const torch::Tensor& generated) {
  if (target.sizes() != generated.sizes()) {
    throw ShapeError(fmt::format("l1 loss shape mismatch: {} vs {}", fmt::join(target.sizes(), "x"),
                                 fmt::join(generated.sizes(), "x")));
  }
  return (target - generated).abs().mean();
}

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("loss weights must be >= 0");
}

torch::Tensor total_generator_objective(const torch::Tensor& adv, const torch::Tensor& l1, const torch::Tensor& perc,
                                        const LossWeights& weights) {
  weights.validate();
  return adv + weights.lambda1 * l1 + weights.lambda2 * perc;
}

double total_generator_objective(double adv, double l1, double perc, const LossWeights& weights) {
  weights.validate();
  return adv + weights.lambda1 * l1 + weights.lambda2 * perc;
}

}  // namespace advpurify::defense
