#include "advpurify/eval/protocols.hpp"

#include "advpurify/attacks/attacks.hpp"
#include "advpurify/core/errors.hpp"
#include "advpurify/core/log.hpp"
#include "advpurify/eval/metrics.hpp"
#include "advpurify/eval/plot.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace advpurify::eval {

using attacks::AttackConfig;
using attacks::AttackKind;

defense::TrainingResult train_defense_on(const datasets::AdversarialDataset& pairs,
                                         const defense::GeneratorConfig& gcfg,
                                         const defense::DiscriminatorConfig& dcfg,
                                         const defense::PerceptualLoss& perceptual,
                                         const defense::LossWeights& weights,
                                         const defense::DefenseTrainConfig& tcfg,
                                         const defense::EpochCallback& on_epoch) {
  if (pairs.size() == 0) throw DataError("cannot train a defense on an empty dataset");
  defense::TrainingManifest manifest;
  manifest.dataset_fingerprint = pairs.manifest.fingerprint;
  manifest.attack_kinds = pairs.attack_names();
  return defense::train_defense(pairs.adversarial_batch(), pairs.clean_batch(), gcfg, dcfg, perceptual, weights, tcfg,
                                std::move(manifest), on_epoch);
}

void append_rows(EvaluationReport& report, const Classifier& classifier, const std::string& dataset,
                 const std::string& attack, double epsilon, const ImageBatch& clean, const ImageBatch& inputs,
                 const LabelBatch& labels, const defense::DefenseCheckpoint* defense, const std::string& defense_id,
                 const nlohmann::json& extra) {
  auto make_row = [&](const ImageBatch& images, const std::string& defense_name) {
    ReportRow row;
    row.dataset = dataset;
    row.attack = attack;
    row.epsilon = epsilon;
    row.model_id = classifier.id();
    row.defense_id = defense_name;
    row.accuracy = accuracy(classifier, images, labels);
    const auto p = psnr(images, clean);
    row.psnr = p.mean_db;
    row.psnr_excluded = p.excluded;
    row.mae = mae(images, clean);
    row.n_images = images.size();
    row.extra = extra;
    return row;
  };
  report.rows.push_back(make_row(inputs, kNoDefense));
  if (defense != nullptr) report.rows.push_back(make_row(defense::reconstruct(*defense, inputs), defense_id));
}

EvaluationReport defense_table(const Classifier& classifier, const datasets::LabeledImages& test,
                               const datasets::AdversarialDataset& attacked,
                               const defense::DefenseCheckpoint& defense, const std::string& defense_id,
                               Provenance provenance) {
  EvaluationReport report;
  report.title = "defense table";
  provenance.manifests.push_back(attacked.manifest.fingerprint);
  report.provenance = std::move(provenance);
  append_rows(report, classifier, test.name, datasets::kCleanTag, 0.0, test.images, test.images, test.labels,
              &defense, defense_id);
  for (const auto& name : attacked.attack_names()) {
    const auto subset = attacked.filter(attacks::parse_attack_kind(name));
    const double eps = subset.manifest.records.front().epsilon;
    append_rows(report, classifier, test.name, name, eps, subset.clean_batch(), subset.adversarial_batch(),
                subset.label_batch(), &defense, defense_id);
  }
  return report;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string optional_csv(const std::optional<double>& v) {
  return v ? fmt::format("{}", *v) : std::string();
}

}  // namespace

nlohmann::json GeneralizabilityMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    nlohmann::json acc_row = nlohmann::json::array();
    nlohmann::json g_row = nlohmann::json::array();
    for (std::size_t j = 0; j < conditions.size(); ++j) {
      acc_row.push_back(optional_json(acc[i][j]));
      g_row.push_back(optional_json(g[i][j]));
    }
    rows.push_back({{"model", models[i]}, {"trained_on", trained_on[i]}, {"acc", acc_row}, {"g", g_row}});
  }
  nlohmann::json none = nlohmann::json::array();
  for (const auto& v : no_defense) none.push_back(optional_json(v));
  return {{"conditions", conditions}, {"no_defense", none}, {"models", rows}};
}

std::string GeneralizabilityMatrix::to_csv() const {
  std::string out = "model,trained_on";
  for (const auto& c : conditions) out += fmt::format(",acc_{0},g_{0}", c);
  out += '\n';
  if (!no_defense.empty()) {
    out += "No defense,";
    for (std::size_t j = 0; j < conditions.size(); ++j) out += fmt::format(",{},", optional_csv(no_defense[j]));
    out += '\n';
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    out += fmt::format("{},{}", models[i], trained_on[i]);
    for (std::size_t j = 0; j < conditions.size(); ++j) {
      out += fmt::format(",{},{}", optional_csv(acc[i][j]), optional_csv(g[i][j]));
    }
    out += '\n';
  }
  return out;
}

GeneralizabilityMatrix build_generalizability_matrix(std::vector<std::string> models,
                                                     std::vector<std::string> trained_on,
                                                     std::vector<std::string> conditions,
                                                     std::vector<std::vector<std::optional<double>>> acc,
                                                     std::vector<std::optional<double>> no_defense) {
  if (trained_on.size() != models.size() || acc.size() != models.size()) {
    throw ShapeError("matrix needs one trained_on entry and one accuracy row per model");
  }
  for (const auto& row : acc) {
    if (row.size() != conditions.size()) throw ShapeError("accuracy row length differs from the condition count");
  }
  if (!no_defense.empty() && no_defense.size() != conditions.size()) {
    throw ShapeError("no-defense row length differs from the condition count");
  }
  GeneralizabilityMatrix m;
  m.g.assign(models.size(), std::vector<std::optional<double>>(conditions.size()));
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto own = std::find(conditions.begin(), conditions.end(), trained_on[i]);
    if (own == conditions.end() || *own == datasets::kCleanTag) continue;
    const auto own_idx = static_cast<std::size_t>(own - conditions.begin());
    const auto& reference = acc[i][own_idx];
    if (!reference) continue;
    for (std::size_t j = 0; j < conditions.size(); ++j) {
      if (j == own_idx || conditions[j] == datasets::kCleanTag || !acc[i][j]) continue;
      m.g[i][j] = generalizability(*acc[i][j], *reference);
    }
  }
  m.models = std::move(models);
  m.trained_on = std::move(trained_on);
  m.conditions = std::move(conditions);
  m.acc = std::move(acc);
  m.no_defense = std::move(no_defense);
  return m;
}

GeneralizabilityMatrix generalizability_matrix(const Classifier& classifier, const std::vector<MatrixModel>& models,
                                               const datasets::LabeledImages& test,
                                               const datasets::AdversarialDataset& attacked,
                                               const std::vector<std::string>& conditions) {
  if (models.empty()) throw ConfigError("the generalizability matrix needs at least one model");
  const auto present = attacked.attack_names();
  std::vector<std::optional<ImageBatch>> inputs;
  std::vector<std::optional<LabelBatch>> labels;
  std::vector<std::optional<double>> no_defense;
  for (const auto& c : conditions) {
    if (c == datasets::kCleanTag) {
      inputs.emplace_back(test.images);
      labels.emplace_back(test.labels);
    } else if (std::find(present.begin(), present.end(), c) != present.end()) {
      const auto subset = attacked.filter(attacks::parse_attack_kind(c));
      inputs.emplace_back(subset.adversarial_batch());
      labels.emplace_back(subset.label_batch());
    } else {
      log::warn("condition {} has no attacked images; its column stays absent", c);
      inputs.emplace_back(std::nullopt);
      labels.emplace_back(std::nullopt);
    }
    no_defense.push_back(inputs.back() ? std::optional<double>(accuracy(classifier, *inputs.back(), *labels.back()))
                                       : std::nullopt);
  }
  std::vector<std::string> names;
  std::vector<std::string> trained_on;
  std::vector<std::vector<std::optional<double>>> acc;
  for (const auto& model : models) {
    if (model.checkpoint == nullptr) throw MissingArtifactError(fmt::format("model {} has no checkpoint", model.name));
    names.push_back(model.name);
    trained_on.push_back(model.trained_on);
    std::vector<std::optional<double>> row;
    for (std::size_t j = 0; j < conditions.size(); ++j) {
      if (!inputs[j]) {
        row.emplace_back(std::nullopt);
        continue;
      }
      row.emplace_back(accuracy(classifier, defense::reconstruct(*model.checkpoint, *inputs[j]), *labels[j]));
    }
    log::info("matrix row {} evaluated", model.name);
    acc.push_back(std::move(row));
  }
  return build_generalizability_matrix(std::move(names), std::move(trained_on), conditions, std::move(acc),
                                       std::move(no_defense));
}

EvaluationReport cross_model_transfer(const defense::DefenseCheckpoint& defense, const std::string& defense_id,
                                      const std::string& source_model_id,
                                      const std::vector<const Classifier*>& targets,
                                      const datasets::LabeledImages& test,
                                      const std::vector<AttackConfig>& attack_list, std::uint64_t seed,
                                      Provenance provenance) {
  if (targets.empty()) throw ConfigError("cross-model transfer needs at least one target model");
  EvaluationReport report;
  report.title = "cross-model transfer";
  const nlohmann::json extra = {{"source_model", source_model_id}};
  for (const auto* target : targets) {
    if (target->id() == source_model_id) {
      throw ConfigError(fmt::format("target model {} is the defense's source model", target->id()));
    }
    append_rows(report, *target, test.name, datasets::kCleanTag, 0.0, test.images, test.images, test.labels, &defense,
                defense_id, extra);
    const auto attacked = datasets::build_adversarial_dataset(test, *target, attack_list,
                                                              datasets::CompositionMode::CrossProduct, seed);
    provenance.manifests.push_back(attacked.manifest.fingerprint);
    for (const auto& name : attacked.attack_names()) {
      const auto subset = attacked.filter(attacks::parse_attack_kind(name));
      append_rows(report, *target, test.name, name, subset.manifest.records.front().epsilon, subset.clean_batch(),
                  subset.adversarial_batch(), subset.label_batch(), &defense, defense_id, extra);
    }
  }
  report.provenance = std::move(provenance);
  return report;
}

void SweepConfig::validate() const {
  if (kinds.empty() || iterations.empty() || epsilons.empty()) throw ConfigError("sweep grids must be non-empty");
  for (auto k : kinds) {
    if (k != AttackKind::PGD && k != AttackKind::MIFGSM && k != AttackKind::BIM) {
      throw ConfigError(fmt::format("the sweep supports PGD, MIFGSM and BIM, not {}", attacks::to_string(k)));
    }
  }
  for (auto n : iterations) {
    if (n < 1) throw ConfigError("sweep iteration counts must be >= 1");
  }
  for (auto e : epsilons) {
    if (!(e >= 0.0)) throw ConfigError("sweep epsilons must be >= 0");
  }
}

nlohmann::json SweepConfig::to_json() const {
  std::vector<std::string> names;
  for (auto k : kinds) names.emplace_back(attacks::to_string(k));
  return {{"kinds", names}, {"iterations", iterations}, {"epsilons", epsilons}, {"step_size", step_size}, {"seed", seed}};
}

double SweepResult::stability_band(AttackKind kind, double epsilon) const {
  double lo = 100.0, hi = 0.0;
  bool any = false;
  for (const auto& c : cells) {
    if (c.kind != kind || c.epsilon != epsilon) continue;
    lo = std::min(lo, c.defended_accuracy);
    hi = std::max(hi, c.defended_accuracy);
    any = true;
  }
  if (!any) throw ConfigError("no sweep cells for that attack and epsilon");
  return hi - lo;
}

std::vector<std::filesystem::path> SweepResult::save_plots(const std::filesystem::path& dir) const {
  std::vector<double> eps;
  std::vector<AttackKind> kinds;
  for (const auto& c : cells) {
    if (std::find(eps.begin(), eps.end(), c.epsilon) == eps.end()) eps.push_back(c.epsilon);
    if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) kinds.push_back(c.kind);
  }
  std::vector<std::filesystem::path> files;
  for (auto e : eps) {
    std::vector<Series> series;
    for (auto k : kinds) {
      Series s{fmt::format("{} defended", attacks::to_string(k)), {}, {}};
      Series a{fmt::format("{} no defense", attacks::to_string(k)), {}, {}};
      for (const auto& c : cells) {
        if (c.kind != k || c.epsilon != e) continue;
        s.x.push_back(static_cast<double>(c.iterations));
        s.y.push_back(c.defended_accuracy);
        a.x.push_back(static_cast<double>(c.iterations));
        a.y.push_back(c.attacked_accuracy);
      }
      series.push_back(std::move(s));
      series.push_back(std::move(a));
    }
    const auto eps255 = static_cast<int>(std::lround(e * 255.0));
    auto path = dir / fmt::format("sweep_eps{}.svg", eps255);
    save_line_plot(path, series,
                   {fmt::format("Accuracy vs iterations, eps = {}/255", eps255), "iterations", "accuracy (%)",
                    std::make_pair(0.0, 100.0)});
    files.push_back(std::move(path));
  }
  return files;
}

SweepResult robustness_sweep(const Classifier& classifier, const defense::DefenseCheckpoint& defense,
                             const std::string& defense_id, const datasets::LabeledImages& test,
                             const SweepConfig& config, Provenance provenance) {
  config.validate();
  SweepResult result;
  result.report.title = "robustness sweep";
  for (auto kind : config.kinds) {
    for (auto eps : config.epsilons) {
      auto cfg = AttackConfig::defaults(kind);
      cfg.budget.epsilon = eps;
      cfg.step_size = config.step_size;
      cfg.seed = attacks::image_seed(config.seed, static_cast<std::int64_t>(kind));
      const auto snapshots = attacks::iterate_snapshots(classifier, test.images, test.labels, cfg, config.iterations,
                                                        test.ids);
      for (std::size_t k = 0; k < snapshots.size(); ++k) {
        const nlohmann::json extra = {{"iterations", config.iterations[k]}, {"step_size", config.step_size}};
        append_rows(result.report, classifier, test.name, std::string(attacks::to_string(kind)), eps, test.images,
                    snapshots[k], test.labels, &defense, defense_id, extra);
        const auto& defended = result.report.rows.back();
        const auto& attacked = result.report.rows[result.report.rows.size() - 2];
        result.cells.push_back({kind, eps, config.iterations[k], attacked.accuracy, defended.accuracy});
      }
      log::info("sweep {} eps {:.4f} done", attacks::to_string(kind), eps);
    }
  }
  result.report.provenance = std::move(provenance);
  return result;
}

nlohmann::json AblationConfig::to_json() const {
  return {{"block_counts", block_counts},
          {"generator", generator.to_json()},
          {"discriminator", discriminator.to_json()},
          {"lambda1", weights.lambda1},
          {"lambda2", weights.lambda2},
          {"train", train.to_json()}};
}

nlohmann::json AblationArm::to_json() const {
  nlohmann::json j = {{"blocks", blocks},
                      {"wall_seconds", wall_seconds},
                      {"defended_accuracy", defended_accuracy},
                      {"failure", failure ? nlohmann::json(*failure) : nlohmann::json(nullptr)}};
  j["final_losses"] = final_losses ? final_losses->to_json() : nlohmann::json(nullptr);
  return j;
}

const AblationArm* AblationResult::arm(std::int64_t blocks) const {
  for (const auto& a : arms) {
    if (a.blocks == blocks) return &a;
  }
  return nullptr;
}

nlohmann::json AblationResult::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& a : arms) j.push_back(a.to_json());
  return {{"arms", j}};
}

AblationResult ablation_residual_blocks(const Classifier& classifier, const datasets::AdversarialDataset& train_pairs,
                                        const datasets::AdversarialDataset& attacked_test,
                                        const defense::PerceptualLoss& perceptual, const AblationConfig& config,
                                        Provenance provenance) {
  if (config.block_counts.empty()) throw ConfigError("the ablation needs at least one block count");
  AblationResult result;
  result.report.title = "residual block ablation";
  provenance.manifests.push_back(train_pairs.manifest.fingerprint);
  provenance.manifests.push_back(attacked_test.manifest.fingerprint);
  const auto attack_names = attacked_test.attack_names();
  for (auto blocks : config.block_counts) {
    AblationArm arm;
    arm.blocks = blocks;
    auto gcfg = config.generator;
    auto dcfg = config.discriminator;
    gcfg.residual_blocks = blocks;
    dcfg.residual_blocks = blocks;
    try {
      log::info("ablation arm: {} residual blocks", blocks);
      auto trained = train_defense_on(train_pairs, gcfg, dcfg, perceptual, config.weights, config.train);
      arm.wall_seconds = trained.wall_seconds;
      arm.final_losses = trained.history.back();
      const auto defense_id = fmt::format("blocks{}", blocks);
      for (const auto& name : attack_names) {
        const auto subset = attacked_test.filter(attacks::parse_attack_kind(name));
        append_rows(result.report, classifier, subset.manifest.name, name, subset.manifest.records.front().epsilon,
                    subset.clean_batch(), subset.adversarial_batch(), subset.label_batch(), &trained.checkpoint,
                    defense_id, {{"blocks", blocks}});
        arm.defended_accuracy[name] = result.report.rows.back().accuracy;
      }
    } catch (const Error& e) {
      log::error("ablation arm with {} blocks failed: {}", blocks, e.what());
      arm.failure = e.what();
    }
    result.arms.push_back(std::move(arm));
  }
  result.report.provenance = std::move(provenance);
  return result;
}

}  // namespace advpurify::eval
