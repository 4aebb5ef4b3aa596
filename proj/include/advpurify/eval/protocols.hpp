#pragma once

#include "advpurify/attacks/attack_config.hpp"
#include "advpurify/core/classifier.hpp"
#include "advpurify/datasets/adversarial_dataset.hpp"
#include "advpurify/datasets/image_datasets.hpp"
#include "advpurify/defense/checkpoint.hpp"
#include "advpurify/defense/trainer.hpp"
#include "advpurify/eval/report.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace advpurify::eval {

// Trains a defense on every (adversarial, clean) pair in `pairs`.
defense::TrainingResult train_defense_on(const datasets::AdversarialDataset& pairs,
                                         const defense::GeneratorConfig& gcfg,
                                         const defense::DiscriminatorConfig& dcfg,
                                         const defense::PerceptualLoss& perceptual,
                                         const defense::LossWeights& weights,
                                         const defense::DefenseTrainConfig& tcfg,
                                         const defense::EpochCallback& on_epoch = {});

// One no-defense row and, when `defense` is set, one defended row for the
// given images. PSNR and MAE compare against `clean`.
void append_rows(EvaluationReport& report, const Classifier& classifier, const std::string& dataset,
                 const std::string& attack, double epsilon, const ImageBatch& clean, const ImageBatch& inputs,
                 const LabelBatch& labels, const defense::DefenseCheckpoint* defense, const std::string& defense_id,
                 const nlohmann::json& extra = nlohmann::json::object());

// {clean, attacked, defended} x attack kinds. `attacked` is a cross-product
// dataset built over `test`.
EvaluationReport defense_table(const Classifier& classifier, const datasets::LabeledImages& test,
                               const datasets::AdversarialDataset& attacked,
                               const defense::DefenseCheckpoint& defense, const std::string& defense_id,
                               Provenance provenance = {});

struct GeneralizabilityMatrix {
  std::vector<std::string> models;
  // Attack each model was trained on; any other value (e.g. "COMBINED")
  // means there is no single reference attack and the row has no G.
  std::vector<std::string> trained_on;
  std::vector<std::string> conditions;  // "CLEAN" and attack names
  std::vector<std::optional<double>> no_defense;
  std::vector<std::vector<std::optional<double>>> acc;
  std::vector<std::vector<std::optional<double>>> g;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Pure: derives g from acc. g[i][j] = 1 - acc[i][j] / acc[i][own(i)] for
// every attack column j other than the model's own; absent elsewhere and
// whenever an input cell is absent or the denominator is not positive.
GeneralizabilityMatrix build_generalizability_matrix(std::vector<std::string> models,
                                                     std::vector<std::string> trained_on,
                                                     std::vector<std::string> conditions,
                                                     std::vector<std::vector<std::optional<double>>> acc,
                                                     std::vector<std::optional<double>> no_defense = {});

struct MatrixModel {
  std::string name;
  std::string trained_on;
  const defense::DefenseCheckpoint* checkpoint = nullptr;
};

// Evaluates every model on CLEAN plus every attack present in `attacked`.
// Conditions missing from `attacked` stay absent.
GeneralizabilityMatrix generalizability_matrix(const Classifier& classifier, const std::vector<MatrixModel>& models,
                                               const datasets::LabeledImages& test,
                                               const datasets::AdversarialDataset& attacked,
                                               const std::vector<std::string>& conditions);

// Attacks are regenerated against each target's own gradients, then
// evaluated with and without the defense. Throws ConfigError when a target
// shares the source model's id.
EvaluationReport cross_model_transfer(const defense::DefenseCheckpoint& defense, const std::string& defense_id,
                                      const std::string& source_model_id,
                                      const std::vector<const Classifier*>& targets,
                                      const datasets::LabeledImages& test,
                                      const std::vector<attacks::AttackConfig>& attack_list, std::uint64_t seed,
                                      Provenance provenance = {});

struct SweepConfig {
  std::vector<attacks::AttackKind> kinds{attacks::AttackKind::PGD, attacks::AttackKind::MIFGSM};
  std::vector<std::int64_t> iterations{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::vector<double> epsilons{2.0 / 255.0, 5.0 / 255.0, 10.0 / 255.0};
  double step_size = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct SweepCell {
  attacks::AttackKind kind{};
  double epsilon = 0.0;
  std::int64_t iterations = 0;
  double attacked_accuracy = 0.0;
  double defended_accuracy = 0.0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  EvaluationReport report;

  // max - min defended accuracy over iteration counts.
  double stability_band(attacks::AttackKind kind, double epsilon) const;
  // One SVG per epsilon: defended accuracy against iterations, a line per
  // attack kind.
  std::vector<std::filesystem::path> save_plots(const std::filesystem::path& dir) const;
};

SweepResult robustness_sweep(const Classifier& classifier, const defense::DefenseCheckpoint& defense,
                             const std::string& defense_id, const datasets::LabeledImages& test,
                             const SweepConfig& config, Provenance provenance = {});

struct AblationConfig {
  // 0 is the plain U-Net / PatchGAN arm.
  std::vector<std::int64_t> block_counts{0, 1, 3, 5, 7, 9, 11, 13, 15};
  defense::GeneratorConfig generator;
  defense::DiscriminatorConfig discriminator;
  defense::LossWeights weights;
  defense::DefenseTrainConfig train;

  nlohmann::json to_json() const;
};

struct AblationArm {
  std::int64_t blocks = 0;
  std::optional<defense::EpochLog> final_losses;
  double wall_seconds = 0.0;
  std::map<std::string, double> defended_accuracy;  // by attack name
  std::optional<std::string> failure;               // divergence or other error

  nlohmann::json to_json() const;
};

struct AblationResult {
  std::vector<AblationArm> arms;
  EvaluationReport report;

  const AblationArm* arm(std::int64_t blocks) const;
  nlohmann::json to_json() const;
};

// Trains one defense per block count (generator and discriminator alike) on
// the same pairs and seed, then evaluates each on `attacked_test`. A failing
// arm is recorded, never dropped.
AblationResult ablation_residual_blocks(const Classifier& classifier, const datasets::AdversarialDataset& train_pairs,
                                        const datasets::AdversarialDataset& attacked_test,
                                        const defense::PerceptualLoss& perceptual, const AblationConfig& config,
                                        Provenance provenance = {});

}  // namespace advpurify::eval
