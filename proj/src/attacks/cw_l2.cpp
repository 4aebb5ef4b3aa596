#include "advpurify/attacks/attacks.hpp"
#include "advpurify/core/ops.hpp"
#include "internal.hpp"

#include <limits>

namespace advpurify::attacks {

// Minimizes ||delta||_2^2 + c * max(z_y - max_{k!=y} z_k, -kappa) with Adam
// in tanh space. The iterate is written as x + (tanh(w) - tanh(w0)) / 2 so the
// starting point reproduces x exactly rather than to atanh round-off.
AttackResult cw_l2(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y, const AttackConfig& cfg) {
  detail::require_kind(cfg, {AttackKind::CW}, "cw_l2");
  detail::check_inputs(classifier, x, y);

  const auto& x0 = x.tensor();
  const auto& labels = y.tensor();
  const auto w0 = torch::atanh(((x0 * 2.0 - 1.0) * (1.0 - 1e-6)));
  const auto tanh0 = torch::tanh(w0);
  auto w = w0.clone().requires_grad_(true);
  torch::optim::Adam optimizer({w}, torch::optim::AdamOptions(cfg.cw_learning_rate));

  auto best = x0.clone();
  auto best_norm = torch::full({x.size()}, std::numeric_limits<float>::infinity());
  auto found = torch::zeros({x.size()}, torch::kBool);
  torch::Tensor last;

  torch::AutoGradMode grad_mode(true);
  for (std::int64_t step = 0; step <= cfg.cw_steps; ++step) {
    const auto adv = x0 + (torch::tanh(w) - tanh0) * 0.5;
    const auto logits = classifier.forward(adv);
    const auto norm2 = (adv - x0).square().flatten(1).sum(1);
    {
      torch::NoGradGuard no_grad;
      const auto fooled = logits.argmax(1) != labels;
      const auto better = fooled & (norm2 < best_norm);
      best = torch::where(better.view({-1, 1, 1, 1}), adv, best);
      best_norm = torch::where(better, norm2, best_norm);
      found = found | fooled;
      last = adv.detach();
    }
    if (step == cfg.cw_steps) break;

    const auto f = margin(logits, labels).clamp_min(-cfg.cw_confidence);
    const auto objective = (norm2 + cfg.cw_constant * f).sum();
    optimizer.zero_grad();
    objective.backward();
    optimizer.step();
  }

  auto adversarial = clip_to_box(torch::where(found.view({-1, 1, 1, 1}), best, last));
  auto success = detail::misclassified(classifier, adversarial, y);
  return AttackResult{std::move(adversarial), std::move(success),
                      std::vector<std::int64_t>(static_cast<std::size_t>(x.size()), cfg.cw_steps)};
}

}  // namespace advpurify::attacks
