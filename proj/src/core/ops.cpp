#include "advpurify/core/ops.hpp"

#include "advpurify/core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace advpurify {

ImageBatch clip_to_box(const torch::Tensor& x) {
  if (!x.defined() || x.dim() != 4) throw ShapeError("clip_to_box expects a 4-D tensor");
  if (!torch::isfinite(x).all().item<bool>()) {
    throw CorruptTensorError("clip_to_box: tensor contains non-finite values");
  }
  return trusted_batch(x.to(torch::kFloat32).clamp(0.0, 1.0));
}

ImageBatch project_linf(const torch::Tensor& x_adv, const ImageBatch& x_orig, double epsilon) {
  if (!x_adv.defined() || x_adv.sizes() != x_orig.tensor().sizes()) {
    throw ShapeError("project_linf: adversarial and original shapes differ");
  }
  if (!(epsilon >= 0.0)) throw ConfigError("project_linf: epsilon must be >= 0");
  const auto& orig = x_orig.tensor();
  auto lower = (orig - epsilon).clamp_min(0.0);
  auto upper = (orig + epsilon).clamp_max(1.0);
  return trusted_batch(torch::min(torch::max(x_adv.to(torch::kFloat32), lower), upper));
}

double gradient_check(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y,
                      const GradientCheckOptions& options) {
  if (options.probes < 1) throw ConfigError("gradient_check needs at least one probe");
  classifier.loss(x, y);  // validates shapes and label range

  auto reference = classifier.to_double();
  const Classifier& fd_model = reference ? *reference : classifier;
  const auto fd_dtype = reference ? torch::kFloat64 : torch::kFloat32;
  const auto base = x.tensor().to(fd_dtype);
  const auto labels = y.tensor();
  // Both sides use the float64 copy when there is one, so float32 round-off on
  // near-zero background gradients does not dominate the relative error.
  const auto analytic = fd_model.input_gradient(base, labels);

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::int64_t> pick(0, x.tensor().numel() - 1);
  const auto per_image = x.shape().numel();

  torch::NoGradGuard no_grad;
  double worst = 0.0;
  for (std::int64_t p = 0; p < options.probes; ++p) {
    const auto flat = pick(rng);
    const auto image = flat / per_image;
    auto sample = base.slice(0, image, image + 1);
    auto label = labels.slice(0, image, image + 1);

    auto plus = sample.clone();
    auto minus = sample.clone();
    plus.view(-1)[flat % per_image] += options.step;
    minus.view(-1)[flat % per_image] -= options.step;
    const double lp = fd_model.loss(plus, label).item<double>();
    const double lm = fd_model.loss(minus, label).item<double>();
    const double numeric = (lp - lm) / (2.0 * options.step);
    const double exact = analytic.view(-1)[flat].item<double>();
    worst = std::max(worst, std::abs(exact - numeric) / (std::abs(exact) + options.floor));
  }
  return worst;
}

}  // namespace advpurify
