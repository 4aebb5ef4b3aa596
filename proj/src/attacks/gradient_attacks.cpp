#include "advpurify/attacks/attacks.hpp"
#include "advpurify/core/errors.hpp"
#include "advpurify/core/ops.hpp"
#include "internal.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <functional>

namespace advpurify::attacks {

namespace detail {

void require_kind(const AttackConfig& cfg, std::initializer_list<AttackKind> allowed, std::string_view op) {
  if (std::find(allowed.begin(), allowed.end(), cfg.kind) == allowed.end()) {
    throw ConfigError(fmt::format("{} called with an attack config of kind {}", op, to_string(cfg.kind)));
  }
  cfg.validate();
}

std::vector<bool> misclassified(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y) {
  const auto pred = classifier.predict(x.tensor());
  const auto wrong = (pred != y.tensor()).to(torch::kBool);
  std::vector<bool> out(static_cast<std::size_t>(x.size()));
  auto acc = wrong.accessor<bool, 1>();
  for (std::int64_t i = 0; i < x.size(); ++i) out[static_cast<std::size_t>(i)] = acc[i];
  return out;
}

void check_inputs(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y) {
  if (x.shape() != classifier.input_shape()) {
    throw ShapeError(fmt::format("attack input shape {} does not match classifier shape {}", x.shape().to_string(),
                                 classifier.input_shape().to_string()));
  }
  y.check_pairs_with(x);
  y.check_range(classifier.num_classes());
}

}  // namespace detail

namespace {

using detail::check_inputs;
using detail::misclassified;
using detail::require_kind;

ImageBatch uniform_start(const ImageBatch& x, double epsilon, std::uint64_t seed, ImageIds ids) {
  const auto resolved = resolve_ids(ids, x.size());
  const auto shape = x.shape();
  std::vector<torch::Tensor> noise;
  noise.reserve(resolved.size());
  for (const auto id : resolved) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(image_seed(seed, id));
    noise.push_back(torch::rand({shape.channels, shape.height, shape.width}, gen) * (2.0 * epsilon) - epsilon);
  }
  return project_linf(x.tensor() + torch::stack(noise), x, epsilon);
}

using Observer = std::function<void(std::int64_t, const ImageBatch&)>;

// Shared loop of BIM, PGD and MI-FGSM.
ImageBatch sign_iterations(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y,
                           const AttackConfig& cfg, ImageBatch current, bool use_momentum,
                           const Observer& observer = {}) {
  const double epsilon = cfg.budget.epsilon;
  torch::Tensor momentum = torch::zeros_like(x.tensor());
  for (std::int64_t n = 1; n <= cfg.iterations; ++n) {
    const auto grad = classifier.input_gradient(current.tensor(), y.tensor());
    torch::Tensor direction;
    if (use_momentum) {
      const auto l1 = grad.abs().flatten(1).sum(1).view({-1, 1, 1, 1});
      // A zero gradient contributes nothing, so the image keeps its previous
      // momentum direction.
      const auto normalized = torch::where(l1 > 0, grad / l1.clamp_min(1e-30), torch::zeros_like(grad));
      momentum = cfg.momentum_decay * momentum + normalized;
      direction = momentum.sign();
    } else {
      direction = grad.sign();
    }
    current = project_linf(clip_to_box(current.tensor() + cfg.step_size * direction).tensor(), x, epsilon);
    if (observer) observer(n, current);
  }
  return current;
}

AttackResult finish(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y, ImageBatch adversarial,
                    std::int64_t iterations) {
  auto success = misclassified(classifier, adversarial, y);
  return AttackResult{std::move(adversarial), std::move(success),
                      std::vector<std::int64_t>(static_cast<std::size_t>(x.size()), iterations)};
}

}  // namespace

torch::Tensor margin(const torch::Tensor& logits, const torch::Tensor& labels) {
  const auto idx = labels.view({-1, 1});
  const auto true_logit = logits.gather(1, idx).squeeze(1);
  const auto others = logits.scatter(1, idx, -std::numeric_limits<float>::infinity());
  return true_logit - std::get<0>(others.max(1));
}

AttackResult fgsm(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y, const AttackConfig& cfg) {
  require_kind(cfg, {AttackKind::FGSM}, "fgsm");
  check_inputs(classifier, x, y);
  const auto grad = classifier.input_gradient(x.tensor(), y.tensor());
  return finish(classifier, x, y, clip_to_box(x.tensor() + cfg.budget.epsilon * grad.sign()), 1);
}

AttackResult bim(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y, const AttackConfig& cfg) {
  require_kind(cfg, {AttackKind::BIM}, "bim");
  check_inputs(classifier, x, y);
  return finish(classifier, x, y, sign_iterations(classifier, x, y, cfg, x, false), cfg.iterations);
}

AttackResult pgd(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y, const AttackConfig& cfg,
                 ImageIds ids) {
  require_kind(cfg, {AttackKind::PGD}, "pgd");
  check_inputs(classifier, x, y);
  auto start = cfg.random_start ? uniform_start(x, cfg.budget.epsilon, cfg.seed, ids) : x;
  return finish(classifier, x, y, sign_iterations(classifier, x, y, cfg, start, false), cfg.iterations);
}

AttackResult mi_fgsm(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y,
                     const AttackConfig& cfg) {
  require_kind(cfg, {AttackKind::MIFGSM}, "mi_fgsm");
  check_inputs(classifier, x, y);
  return finish(classifier, x, y, sign_iterations(classifier, x, y, cfg, x, true), cfg.iterations);
}

std::vector<ImageBatch> iterate_snapshots(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y,
                                          const AttackConfig& cfg, std::span<const std::int64_t> counts,
                                          ImageIds ids) {
  require_kind(cfg, {AttackKind::BIM, AttackKind::PGD, AttackKind::MIFGSM}, "iterate_snapshots");
  check_inputs(classifier, x, y);
  if (counts.empty()) throw ConfigError("iterate_snapshots needs at least one iteration count");
  for (auto c : counts) {
    if (c < 1) throw ConfigError("iteration counts must be >= 1");
  }
  auto run = cfg;
  run.iterations = *std::max_element(counts.begin(), counts.end());

  std::vector<std::optional<ImageBatch>> taken(counts.size());
  const Observer keep = [&](std::int64_t n, const ImageBatch& iterate) {
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] == n) taken[i] = iterate;
    }
  };
  const bool random = cfg.kind == AttackKind::PGD && cfg.random_start;
  auto start = random ? uniform_start(x, cfg.budget.epsilon, cfg.seed, ids) : x;
  sign_iterations(classifier, x, y, run, start, cfg.kind == AttackKind::MIFGSM, keep);

  std::vector<ImageBatch> out;
  out.reserve(taken.size());
  for (auto& t : taken) out.push_back(std::move(*t));
  return out;
}

}  // namespace advpurify::attacks
