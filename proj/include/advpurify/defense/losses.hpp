#pragma once

#include "advpurify/core/reference_classifiers.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <string>
#include <vector>

namespace advpurify::defense {

// Scores are clamped into [kScoreGuard, 1 - kScoreGuard] before the log.
inline constexpr double kScoreGuard = 1e-7;

// -mean log D over patches and batch. Throws DomainError for scores outside
// [0, 1].
torch::Tensor generator_adversarial_loss(const torch::Tensor& fake_scores);
// -mean [log D(real) + log(1 - D(fake))].
torch::Tensor discriminator_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);

// Same losses computed from pre-sigmoid logits with log-sigmoid, which is
// what training uses.
torch::Tensor generator_adversarial_loss_from_logits(const torch::Tensor& fake_logits);
torch::Tensor discriminator_loss_from_logits(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);

// Mean absolute difference over all elements.
torch::Tensor l1_pixel_loss(const torch::Tensor& target, const torch::Tensor& generated);

struct LossWeights {
  double lambda1 = 100.0;
  double lambda2 = 1.0;

  void validate() const;
};

torch::Tensor total_generator_objective(const torch::Tensor& adv, const torch::Tensor& l1, const torch::Tensor& perc,
                                        const LossWeights& weights = {});
double total_generator_objective(double adv, double l1, double perc, const LossWeights& weights = {});

struct PerceptualConfig {
  std::string feature_network = "perceptual";
  std::vector<std::string> tapped_layers{"block1", "block2"};
  std::vector<double> layer_weights{1.0, 1.0};

  void validate() const;
  nlohmann::json to_json() const;
  static PerceptualConfig from_json(const nlohmann::json& j);
};

// sum_k a_k * mean |V_k(target) - V_k(generated)| over a frozen ConvNet's
// named stages.
class PerceptualLoss {
 public:
  PerceptualLoss(PerceptualConfig config, const ConvNet& features);

  // Differentiable in both arguments.
  torch::Tensor operator()(const torch::Tensor& target, const torch::Tensor& generated) const;

  // Copy with the feature network cast to `dtype`.
  PerceptualLoss to(torch::Dtype dtype) const;

  const PerceptualConfig& config() const { return config_; }
  const ConvNet& network() const { return net_; }

 private:
  std::vector<torch::Tensor> tapped(const torch::Tensor& x) const;

  PerceptualConfig config_;
  ConvNet net_{nullptr};
};

}  // namespace advpurify::defense
