#include "advpurify/attacks/attack_config.hpp"

#include "advpurify/core/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

namespace advpurify::attacks {

namespace {

struct KindName {
  AttackKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {AttackKind::FGSM, "FGSM"},         {AttackKind::BIM, "BIM"},
    {AttackKind::PGD, "PGD"},           {AttackKind::MIFGSM, "MIFGSM"},
    {AttackKind::CW, "CW"},             {AttackKind::DEEPFOOL, "DEEPFOOL"},
    {AttackKind::SQUARE, "SQUARE"},     {AttackKind::AUTOCOMPOSITE, "AUTOCOMPOSITE"},
};

std::string normalize(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '-' || c == '_' || c == '&' || c == ' ') continue;
    out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::string_view to_string(AttackKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "UNKNOWN";
}

AttackKind parse_attack_kind(std::string_view text) {
  const auto key = normalize(text);
  for (const auto& [k, name] : kKindNames) {
    if (key == name) return k;
  }
  if (key == "MI" || key == "MIFGSM") return AttackKind::MIFGSM;
  if (key == "AUTOATTACK" || key == "AA" || key == "AUTO") return AttackKind::AUTOCOMPOSITE;
  if (key == "CARLINIWAGNER" || key == "CWL2") return AttackKind::CW;
  std::string valid;
  for (const auto& [k, name] : kKindNames) valid += fmt::format("{}{}", valid.empty() ? "" : ", ", name);
  throw ConfigError(fmt::format("unknown attack kind '{}'; valid kinds: {}", text, valid));
}

std::vector<AttackKind> all_attack_kinds() {
  std::vector<AttackKind> kinds;
  for (const auto& [k, name] : kKindNames) kinds.push_back(k);
  return kinds;
}

bool is_linf_kind(AttackKind kind) {
  return kind != AttackKind::CW && kind != AttackKind::DEEPFOOL;
}

AttackConfig AttackConfig::defaults(AttackKind kind) {
  AttackConfig cfg;
  cfg.kind = kind;
  cfg.budget = {is_linf_kind(kind) ? Norm::Linf : Norm::L2, 16.0 / 255.0};
  cfg.random_start = kind == AttackKind::PGD;
  if (kind == AttackKind::SQUARE) cfg.iterations = 300;
  return cfg;
}

void AttackConfig::validate() const {
  budget.validate();
  const bool iterative = kind == AttackKind::BIM || kind == AttackKind::PGD || kind == AttackKind::MIFGSM ||
                         kind == AttackKind::AUTOCOMPOSITE;
  if (iterative && iterations < 1) throw ConfigError("iterative attacks need iterations >= 1");
  if (iterative && !(step_size > 0.0)) throw ConfigError("iterative attacks need step_size > 0");
  if (kind == AttackKind::SQUARE && iterations < 0) throw ConfigError("square attack query budget must be >= 0");
  if (!(momentum_decay >= 0.0)) throw ConfigError("momentum_decay must be >= 0");
  if (!(cw_constant >= 0.0)) throw ConfigError("cw_constant must be >= 0");
  if (kind == AttackKind::CW && cw_steps < 1) throw ConfigError("C&W needs cw_steps >= 1");
  if (kind == AttackKind::CW && !(cw_learning_rate > 0.0)) throw ConfigError("C&W needs cw_learning_rate > 0");
  if (!(cw_confidence >= 0.0)) throw ConfigError("cw_confidence must be >= 0");
  if (!(deepfool_overshoot >= 0.0)) throw ConfigError("deepfool_overshoot must be >= 0");
  if (deepfool_max_iter < 0) throw ConfigError("deepfool_max_iter must be >= 0");
  if (kind == AttackKind::SQUARE && budget.norm != Norm::Linf) throw ConfigError("square attack supports only Linf");
  if (kind == AttackKind::AUTOCOMPOSITE && budget.norm != Norm::Linf) {
    throw ConfigError("the composite attack supports only Linf");
  }
  if (!(square_p_init > 0.0 && square_p_init <= 1.0)) throw ConfigError("square_p_init must lie in (0, 1]");
  if (composite_pgd_restarts < 0) throw ConfigError("composite_pgd_restarts must be >= 0");
}

nlohmann::json AttackConfig::to_json() const {
  return {
      {"kind", to_string(kind)},
      {"norm", advpurify::to_string(budget.norm)},
      {"epsilon", budget.epsilon},
      {"step_size", step_size},
      {"iterations", iterations},
      {"momentum_decay", momentum_decay},
      {"cw_constant", cw_constant},
      {"cw_learning_rate", cw_learning_rate},
      {"cw_steps", cw_steps},
      {"cw_confidence", cw_confidence},
      {"deepfool_overshoot", deepfool_overshoot},
      {"deepfool_max_iter", deepfool_max_iter},
      {"random_start", random_start},
      {"seed", seed},
      {"square_p_init", square_p_init},
      {"composite_pgd_restarts", composite_pgd_restarts},
  };
}

AttackConfig AttackConfig::from_json(const nlohmann::json& j) {
  auto cfg = defaults(parse_attack_kind(j.at("kind").get<std::string>()));
  if (j.contains("norm")) cfg.budget.norm = parse_norm(j["norm"].get<std::string>());
  cfg.budget.epsilon = j.value("epsilon", cfg.budget.epsilon);
  cfg.step_size = j.value("step_size", cfg.step_size);
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.momentum_decay = j.value("momentum_decay", cfg.momentum_decay);
  cfg.cw_constant = j.value("cw_constant", cfg.cw_constant);
  cfg.cw_learning_rate = j.value("cw_learning_rate", cfg.cw_learning_rate);
  cfg.cw_steps = j.value("cw_steps", cfg.cw_steps);
  cfg.cw_confidence = j.value("cw_confidence", cfg.cw_confidence);
  cfg.deepfool_overshoot = j.value("deepfool_overshoot", cfg.deepfool_overshoot);
  cfg.deepfool_max_iter = j.value("deepfool_max_iter", cfg.deepfool_max_iter);
  cfg.random_start = j.value("random_start", cfg.random_start);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.square_p_init = j.value("square_p_init", cfg.square_p_init);
  cfg.composite_pgd_restarts = j.value("composite_pgd_restarts", cfg.composite_pgd_restarts);
  cfg.validate();
  return cfg;
}

double AttackResult::success_rate() const {
  if (success.empty()) return 0.0;
  return static_cast<double>(std::count(success.begin(), success.end(), true)) / static_cast<double>(success.size());
}

std::uint64_t image_seed(std::uint64_t seed, std::int64_t image_id) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(image_id) + 0x5bd1e995ULL));
}

std::vector<std::int64_t> resolve_ids(ImageIds ids, std::int64_t batch_size) {
  if (ids.empty()) {
    std::vector<std::int64_t> out(static_cast<std::size_t>(batch_size));
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  if (static_cast<std::int64_t>(ids.size()) != batch_size) {
    throw ShapeError(fmt::format("{} image ids for a batch of {}", ids.size(), batch_size));
  }
  return {ids.begin(), ids.end()};
}

}  // namespace advpurify::attacks
