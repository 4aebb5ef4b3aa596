#pragma once

#include "advpurify/core/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace advpurify::attacks {

enum class AttackKind { FGSM, BIM, PGD, MIFGSM, CW, DEEPFOOL, SQUARE, AUTOCOMPOSITE };

std::string_view to_string(AttackKind kind);
// Accepts the canonical names above plus common spellings ("MI-FGSM",
// "C&W", "AutoAttack", ...). Throws ConfigError listing the valid kinds.
AttackKind parse_attack_kind(std::string_view text);
std::vector<AttackKind> all_attack_kinds();
// True for the kinds whose output is confined to an L-inf ball.
bool is_linf_kind(AttackKind kind);

struct AttackConfig {
  AttackKind kind = AttackKind::FGSM;
  PerturbationBudget budget{};
  double step_size = 0.01;        // alpha
  std::int64_t iterations = 40;   // N; query budget for SQUARE
  double momentum_decay = 1.0;    // mu
  double cw_constant = 1.0;       // c
  double cw_learning_rate = 0.01;
  std::int64_t cw_steps = 100;
  double cw_confidence = 0.0;     // kappa
  double deepfool_overshoot = 0.02;
  std::int64_t deepfool_max_iter = 50;
  bool random_start = false;
  std::uint64_t seed = 0;

  // Initial fraction of pixels covered by a square patch.
  double square_p_init = 0.1;
  // Random-start PGD runs placed before the square attack in AUTOCOMPOSITE.
  std::int64_t composite_pgd_restarts = 2;

  // Defaults for dataset construction: eps 16/255, 40 iterations, step 0.01.
  static AttackConfig defaults(AttackKind kind);

  void validate() const;
  nlohmann::json to_json() const;
  static AttackConfig from_json(const nlohmann::json& j);
};

struct AttackResult {
  ImageBatch adversarial;
  // Misclassified after the attack (for DeepFool: prediction changed).
  std::vector<bool> success;
  std::vector<std::int64_t> iterations;

  double success_rate() const;
};

// Every image has its own random stream derived from (seed, image id), so
// splitting a batch across workers does not change results. An empty id list
// means ids 0..N-1.
using ImageIds = std::span<const std::int64_t>;

std::uint64_t image_seed(std::uint64_t seed, std::int64_t image_id);
std::vector<std::int64_t> resolve_ids(ImageIds ids, std::int64_t batch_size);

}  // namespace advpurify::attacks
