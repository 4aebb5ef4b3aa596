#include "advpurify/attacks/attacks.hpp"
#include "advpurify/core/errors.hpp"
#include "advpurify/core/ops.hpp"
#include "internal.hpp"

#include <fmt/format.h>

#include <limits>

namespace advpurify::attacks {

namespace {

// d logits[:, k] / d x for every class k, stacked to (K, N, C, H, W).
torch::Tensor class_gradients(const torch::Tensor& logits, const torch::Tensor& input) {
  std::vector<torch::Tensor> grads;
  grads.reserve(static_cast<std::size_t>(logits.size(1)));
  for (std::int64_t k = 0; k < logits.size(1); ++k) {
    grads.push_back(torch::autograd::grad({logits.select(1, k).sum()}, {input}, {}, /*retain_graph=*/true)[0]);
  }
  return torch::stack(grads);
}

}  // namespace

AttackResult deepfool(const Classifier& classifier, const ImageBatch& x, const AttackConfig& cfg) {
  detail::require_kind(cfg, {AttackKind::DEEPFOOL}, "deepfool");
  if (x.shape() != classifier.input_shape()) {
    throw ShapeError(fmt::format("deepfool input shape {} does not match classifier shape {}", x.shape().to_string(),
                                 classifier.input_shape().to_string()));
  }
  const auto n = x.size();
  const auto& x0 = x.tensor();
  const auto original = classifier.predict(x0);

  auto iterate = x0.clone();
  auto output = x0.clone();
  std::vector<bool> success(static_cast<std::size_t>(n), false);
  std::vector<std::int64_t> iterations(static_cast<std::size_t>(n), 0);
  std::vector<std::int64_t> active(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) active[static_cast<std::size_t>(i)] = i;

  torch::AutoGradMode grad_mode(true);
  for (std::int64_t it = 0; it < cfg.deepfool_max_iter && !active.empty(); ++it) {
    const auto idx = torch::tensor(active, torch::kLong);
    const auto pred = original.index_select(0, idx);
    auto probe = iterate.index_select(0, idx).requires_grad_(true);
    const auto logits = classifier.forward(probe);
    const auto grads = class_gradients(logits, probe).detach();  // (K, m, C, H, W)
    const auto f = logits.detach();                               // (m, K)
    const auto m = static_cast<std::int64_t>(active.size());
    const auto rows = torch::arange(m, torch::kLong);

    // Differences to the predicted class: w_k = grad f_k - grad f_pred, f_k - f_pred.
    const auto grad_pred = grads.permute({1, 0, 2, 3, 4}).index({rows, pred});  // (m, C, H, W)
    const auto w = grads - grad_pred.unsqueeze(0);                                // (K, m, C, H, W)
    const auto w_norm = w.flatten(2).norm(2, 2).t();                              // (m, K)
    const auto f_diff = f - f.gather(1, pred.view({-1, 1}));                      // (m, K)

    auto distance = f_diff.abs() / w_norm;
    distance = torch::where(w_norm > 0, distance, torch::full_like(distance, std::numeric_limits<float>::infinity()));
    distance.scatter_(1, pred.view({-1, 1}), std::numeric_limits<float>::infinity());
    const auto [closest_dist, closest] = distance.min(1);

    const auto w_closest = w.permute({1, 0, 2, 3, 4}).index({rows, closest});  // (m, C, H, W)
    const auto norm_closest = w_norm.gather(1, closest.view({-1, 1})).squeeze(1);
    const auto f_closest = f_diff.gather(1, closest.view({-1, 1})).squeeze(1).abs();
    const auto degenerate = torch::isinf(closest_dist);
    const auto scale = torch::where(degenerate, torch::zeros_like(f_closest), f_closest / norm_closest.square());
    const auto step = scale.view({-1, 1, 1, 1}) * w_closest;

    torch::NoGradGuard no_grad;
    const auto moved = (probe.detach() + step).clamp(0.0, 1.0);
    iterate.index_copy_(0, idx, moved);
    const auto candidate = (x0.index_select(0, idx) + (1.0 + cfg.deepfool_overshoot) * (moved - x0.index_select(0, idx)))
                               .clamp(0.0, 1.0);
    const auto flipped = (classifier.predict(candidate) != pred).to(torch::kBool);

    std::vector<std::int64_t> still_active;
    auto flipped_acc = flipped.accessor<bool, 1>();
    auto degenerate_acc = degenerate.accessor<bool, 1>();
    for (std::int64_t j = 0; j < m; ++j) {
      const auto i = active[static_cast<std::size_t>(j)];
      if (degenerate_acc[j]) {
        // No usable boundary direction: give the image back untouched.
        output[i].copy_(x0[i]);
        continue;
      }
      ++iterations[static_cast<std::size_t>(i)];
      output[i].copy_(candidate[j]);
      if (flipped_acc[j]) {
        success[static_cast<std::size_t>(i)] = true;
      } else {
        still_active.push_back(i);
      }
    }
    active = std::move(still_active);
  }

  return AttackResult{trusted_batch(output), std::move(success), std::move(iterations)};
}

}  // namespace advpurify::attacks
