#pragma once

#include "advpurify/attacks/attack_config.hpp"
#include "advpurify/core/classifier.hpp"

#include <span>
#include <vector>

namespace advpurify::attacks {

// Each attack checks that cfg.kind matches and that cfg validates. Outputs
// always lie in the [0, 1] box; L-inf attacks additionally stay within
// cfg.budget.epsilon of x.

// x + eps * sign(grad), box-clipped. One gradient evaluation.
AttackResult fgsm(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y, const AttackConfig& cfg);

// Iterated signed-gradient steps; each step is box-clipped, then projected
// back onto the eps-ball.
AttackResult bim(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y, const AttackConfig& cfg);

// BIM with an optional uniform random start inside the eps-ball.
AttackResult pgd(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y, const AttackConfig& cfg,
                 ImageIds ids = {});

// BIM driven by an accumulated, per-image L1-normalized gradient.
AttackResult mi_fgsm(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y,
                     const AttackConfig& cfg);

// Iterates of BIM / PGD / MI-FGSM after each of the requested iteration
// counts, from a single run of max(counts) iterations. The iterate after n
// steps is exactly the output of the same attack configured with n steps.
std::vector<ImageBatch> iterate_snapshots(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y,
                                          const AttackConfig& cfg, std::span<const std::int64_t> counts,
                                          ImageIds ids = {});

AttackResult cw_l2(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y, const AttackConfig& cfg);

// Untargeted and label-free: moves each image toward the nearest linearized
// decision boundary of the classifier's own prediction.
AttackResult deepfool(const Classifier& classifier, const ImageBatch& x, const AttackConfig& cfg);

struct SquareTrace {
  // Per image: margin before any proposal, then after each accepted one.
  std::vector<std::vector<double>> margins;
  std::vector<std::int64_t> accepted;
};

// Gradient-free random search over square patches of +-eps.
// cfg.iterations is the per-image query budget.
AttackResult square_attack(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y,
                           const AttackConfig& cfg, ImageIds ids = {}, SquareTrace* trace = nullptr);

// Random-start PGD restarts followed by the square attack, all sharing cfg's
// eps-ball.
std::vector<AttackConfig> default_composite_members(const AttackConfig& cfg);

// The first member that fools an image fixes its output; images never fooled
// keep the last member's output.
AttackResult auto_composite(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y,
                            const AttackConfig& cfg, ImageIds ids = {},
                            std::span<const AttackConfig> members = {});

// Dispatches on cfg.kind. Large batches are processed in chunks; per-image
// random streams keep the result independent of chunking.
AttackResult run_attack(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y,
                        const AttackConfig& cfg, ImageIds ids = {});

// Margin z_y - max_{k != y} z_k per sample.
torch::Tensor margin(const torch::Tensor& logits, const torch::Tensor& labels);

}  // namespace advpurify::attacks
