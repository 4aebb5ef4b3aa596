#include "advpurify/attacks/attacks.hpp"
#include "advpurify/core/errors.hpp"
#include "internal.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace advpurify::attacks {

std::vector<AttackConfig> default_composite_members(const AttackConfig& cfg) {
  std::vector<AttackConfig> members;
  for (std::int64_t r = 0; r < cfg.composite_pgd_restarts; ++r) {
    auto pgd_cfg = cfg;
    pgd_cfg.kind = AttackKind::PGD;
    pgd_cfg.random_start = true;
    pgd_cfg.seed = image_seed(cfg.seed, -1 - r);
    members.push_back(pgd_cfg);
  }
  auto square_cfg = AttackConfig::defaults(AttackKind::SQUARE);
  square_cfg.budget = cfg.budget;
  square_cfg.square_p_init = cfg.square_p_init;
  square_cfg.seed = image_seed(cfg.seed, -1000);
  members.push_back(square_cfg);
  return members;
}

AttackResult auto_composite(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y,
                            const AttackConfig& cfg, ImageIds ids, std::span<const AttackConfig> members) {
  detail::require_kind(cfg, {AttackKind::AUTOCOMPOSITE}, "auto_composite");
  detail::check_inputs(classifier, x, y);
  std::vector<AttackConfig> defaults;
  if (members.empty()) {
    defaults = default_composite_members(cfg);
    members = defaults;
  }
  if (members.empty()) throw ConfigError("the composite attack needs at least one member");

  const auto resolved = resolve_ids(ids, x.size());
  auto output = x.tensor().clone();
  std::vector<bool> success(resolved.size(), false);
  std::vector<std::int64_t> iterations(resolved.size(), 0);
  std::vector<std::int64_t> remaining(resolved.size());
  for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = static_cast<std::int64_t>(i);

  for (std::size_t m = 0; m < members.size() && !remaining.empty(); ++m) {
    auto member = members[m];
    if (member.kind == AttackKind::AUTOCOMPOSITE) throw ConfigError("composite attacks cannot nest");
    // Every member works inside the composite's own eps-ball.
    member.budget = cfg.budget;
    const auto idx = torch::tensor(remaining, torch::kLong);
    std::vector<std::int64_t> sub_ids;
    for (auto r : remaining) sub_ids.push_back(resolved[static_cast<std::size_t>(r)]);

    const auto result = run_attack(classifier, x.select(idx), y.select(idx), member, sub_ids);
    const bool last = m + 1 == members.size();
    std::vector<std::int64_t> next;
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      const auto i = remaining[j];
      iterations[static_cast<std::size_t>(i)] += result.iterations[j];
      if (result.success[j] || last) output[i].copy_(result.adversarial.tensor()[static_cast<std::int64_t>(j)]);
      if (result.success[j]) {
        success[static_cast<std::size_t>(i)] = true;
      } else {
        next.push_back(i);
      }
    }
    remaining = std::move(next);
  }
  return AttackResult{trusted_batch(output), std::move(success), std::move(iterations)};
}

AttackResult run_attack(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y,
                        const AttackConfig& cfg, ImageIds ids) {
  cfg.validate();
  const auto resolved = resolve_ids(ids, x.size());
  constexpr std::int64_t kChunk = 500;
  if (x.size() > kChunk) {
    std::vector<ImageBatch> parts;
    AttackResult merged{x, {}, {}};
    for (std::int64_t start = 0; start < x.size(); start += kChunk) {
      const auto end = std::min(x.size(), start + kChunk);
      const std::span<const std::int64_t> chunk_ids(resolved.data() + start, static_cast<std::size_t>(end - start));
      auto part = run_attack(classifier, x.slice(start, end), y.slice(start, end), cfg, chunk_ids);
      parts.push_back(part.adversarial);
      merged.success.insert(merged.success.end(), part.success.begin(), part.success.end());
      merged.iterations.insert(merged.iterations.end(), part.iterations.begin(), part.iterations.end());
    }
    merged.adversarial = ImageBatch::concat(parts);
    return merged;
  }

  switch (cfg.kind) {
    case AttackKind::FGSM: return fgsm(classifier, x, y, cfg);
    case AttackKind::BIM: return bim(classifier, x, y, cfg);
    case AttackKind::PGD: return pgd(classifier, x, y, cfg, resolved);
    case AttackKind::MIFGSM: return mi_fgsm(classifier, x, y, cfg);
    case AttackKind::CW: return cw_l2(classifier, x, y, cfg);
    case AttackKind::DEEPFOOL: return deepfool(classifier, x, cfg);
    case AttackKind::SQUARE: return square_attack(classifier, x, y, cfg, resolved);
    case AttackKind::AUTOCOMPOSITE: return auto_composite(classifier, x, y, cfg, resolved);
  }
  throw ConfigError(fmt::format("unhandled attack kind {}", to_string(cfg.kind)));
}

}  // namespace advpurify::attacks
