#include "advpurify/core/errors.hpp"
#include "advpurify/defense/losses.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>

namespace advpurify::defense {

void PerceptualConfig::validate() const {
  if (tapped_layers.empty()) throw ConfigError("perceptual loss needs at least one tapped layer");
  if (tapped_layers.size() != layer_weights.size()) {
    throw ConfigError(fmt::format("{} tapped layers but {} layer weights", tapped_layers.size(), layer_weights.size()));
  }
  for (auto w : layer_weights) {
    if (!(w >= 0.0)) throw ConfigError("perceptual layer weights must be >= 0");
  }
  for (const auto& name : tapped_layers) {
    if (name == "logits") throw ConfigError("the classification layer cannot be tapped for the perceptual loss");
  }
}

nlohmann::json PerceptualConfig::to_json() const {
  return {{"feature_network", feature_network}, {"tapped_layers", tapped_layers}, {"layer_weights", layer_weights}};
}

PerceptualConfig PerceptualConfig::from_json(const nlohmann::json& j) {
  PerceptualConfig cfg;
  cfg.feature_network = j.at("feature_network").get<std::string>();
  cfg.tapped_layers = j.at("tapped_layers").get<std::vector<std::string>>();
  cfg.layer_weights = j.at("layer_weights").get<std::vector<double>>();
  cfg.validate();
  return cfg;
}

PerceptualLoss::PerceptualLoss(PerceptualConfig config, const ConvNet& features) : config_(std::move(config)) {
  config_.validate();
  if (!features) throw ConfigError("perceptual loss needs a feature network");
  const auto names = features->stage_names();
  for (const auto& name : config_.tapped_layers) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw ConfigError(
          fmt::format("layer '{}' is not in the feature network (available: {})", name, fmt::join(names, ", ")));
    }
  }
  net_ = ConvNet(std::dynamic_pointer_cast<ConvNetImpl>(features->clone()));
  net_->eval();
  for (auto& p : net_->parameters()) p.requires_grad_(false);
}

PerceptualLoss PerceptualLoss::to(torch::Dtype dtype) const {
  PerceptualLoss copy(config_, net_);
  copy.net_->to(dtype);
  return copy;
}

std::vector<torch::Tensor> PerceptualLoss::tapped(const torch::Tensor& x) const {
  auto stages = net_.ptr()->stages(x);
  std::vector<torch::Tensor> out;
  for (const auto& name : config_.tapped_layers) {
    auto it = std::find_if(stages.begin(), stages.end(), [&](const auto& s) { return s.first == name; });
    out.push_back(it->second);
  }
  return out;
}

torch::Tensor PerceptualLoss::operator()(const torch::Tensor& target, const torch::Tensor& generated) const {
  if (target.sizes() != generated.sizes()) throw ShapeError("perceptual loss inputs differ in shape");
  const auto a = tapped(target);
  const auto b = tapped(generated);
  auto total = torch::zeros({}, generated.options());
  for (std::size_t k = 0; k < a.size(); ++k) {
    total = total + config_.layer_weights[k] * (a[k] - b[k]).abs().mean();
  }
  return total;
}

}  // namespace advpurify::defense
