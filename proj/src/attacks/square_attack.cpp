#include "advpurify/attacks/attacks.hpp"
#include "advpurify/core/ops.hpp"
#include "internal.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace advpurify::attacks {

namespace {

// Fraction of pixels covered by the next square, halved on a fixed schedule
// relative to a 10,000-query run.
double patch_fraction(double p_init, std::int64_t query, std::int64_t budget) {
  const auto t = static_cast<std::int64_t>(static_cast<double>(query) / static_cast<double>(budget) * 10000.0);
  constexpr std::int64_t kSchedule[] = {10, 50, 200, 500, 1000, 2000, 4000, 6000, 8000};
  double p = p_init;
  for (auto boundary : kSchedule) {
    if (t > boundary) p /= 2.0;
  }
  return p;
}

}  // namespace

AttackResult square_attack(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y,
                           const AttackConfig& cfg, ImageIds ids, SquareTrace* trace) {
  detail::require_kind(cfg, {AttackKind::SQUARE}, "square_attack");
  detail::check_inputs(classifier, x, y);

  const auto n = x.size();
  const auto shape = x.shape();
  const auto resolved = resolve_ids(ids, n);
  const auto eps = static_cast<float>(cfg.budget.epsilon);
  const auto& x0 = x.tensor();
  const auto& labels = y.tensor();

  std::vector<std::mt19937_64> rngs;
  rngs.reserve(static_cast<std::size_t>(n));
  for (auto id : resolved) rngs.emplace_back(image_seed(cfg.seed, id));

  auto delta = torch::zeros_like(x0);
  torch::NoGradGuard no_grad;
  auto best_margin = margin(classifier.forward(x0), labels).contiguous();
  std::vector<std::int64_t> queries(static_cast<std::size_t>(n), 0);
  std::vector<std::int64_t> accepted(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<double>> margins(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) margins[static_cast<std::size_t>(i)].push_back(best_margin[i].item<double>());

  auto sign_draw = [&](std::mt19937_64& rng) { return std::bernoulli_distribution(0.5)(rng) ? eps : -eps; };

  for (std::int64_t q = 0; q < cfg.iterations; ++q) {
    std::vector<std::int64_t> active;
    for (std::int64_t i = 0; i < n; ++i) {
      if (best_margin[i].item<float>() >= 0.0F) active.push_back(i);
    }
    if (active.empty()) break;

    auto proposal = delta.index_select(0, torch::tensor(active, torch::kLong)).clone();
    for (std::size_t j = 0; j < active.size(); ++j) {
      auto& rng = rngs[static_cast<std::size_t>(active[j])];
      auto pj = proposal[static_cast<std::int64_t>(j)];
      if (q == 0) {
        // Vertical stripes of +-eps initialize the search.
        for (std::int64_t c = 0; c < shape.channels; ++c) {
          for (std::int64_t col = 0; col < shape.width; ++col) pj[c].select(1, col).fill_(sign_draw(rng));
        }
        continue;
      }
      const double p = patch_fraction(cfg.square_p_init, q, cfg.iterations);
      auto side = static_cast<std::int64_t>(std::lround(std::sqrt(p * static_cast<double>(shape.height * shape.width))));
      side = std::clamp<std::int64_t>(side, 1, std::max<std::int64_t>(1, std::min(shape.height, shape.width) - 1));
      const auto top = std::uniform_int_distribution<std::int64_t>(0, shape.height - side)(rng);
      const auto left = std::uniform_int_distribution<std::int64_t>(0, shape.width - side)(rng);
      for (std::int64_t c = 0; c < shape.channels; ++c) {
        pj[c].slice(0, top, top + side).slice(1, left, left + side).fill_(sign_draw(rng));
      }
    }

    const auto idx = torch::tensor(active, torch::kLong);
    const auto base = x0.index_select(0, idx);
    const auto candidate = (base + proposal).clamp(0.0, 1.0);
    const auto candidate_margin = margin(classifier.forward(candidate), labels.index_select(0, idx));
    for (std::size_t j = 0; j < active.size(); ++j) {
      const auto i = active[j];
      const auto jj = static_cast<std::int64_t>(j);
      ++queries[static_cast<std::size_t>(i)];
      const float value = candidate_margin[jj].item<float>();
      if (value < best_margin[i].item<float>()) {
        best_margin[i] = value;
        delta[i].copy_(proposal[jj]);
        ++accepted[static_cast<std::size_t>(i)];
        margins[static_cast<std::size_t>(i)].push_back(value);
      }
    }
  }

  auto adversarial = project_linf((x0 + delta).clamp(0.0, 1.0), x, cfg.budget.epsilon);
  auto success = detail::misclassified(classifier, adversarial, y);
  if (trace != nullptr) {
    trace->margins = std::move(margins);
    trace->accepted = accepted;
  }
  return AttackResult{std::move(adversarial), std::move(success), std::move(queries)};
}

}  // namespace advpurify::attacks
