#include "advpurify/attacks/attacks.hpp"
#include "advpurify/cli/cli.hpp"
#include "advpurify/core/errors.hpp"
#include "advpurify/core/log.hpp"
#include "advpurify/core/reference_classifiers.hpp"
#include "advpurify/datasets/adversarial_dataset.hpp"
#include "advpurify/datasets/png_export.hpp"
#include "advpurify/datasets/tensor_io.hpp"
#include "advpurify/eval/metrics.hpp"
#include "advpurify/eval/plot.hpp"
#include "advpurify/eval/protocols.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <functional>
#include <iostream>
#include <map>

namespace advpurify::cli {

namespace fs = std::filesystem;
using attacks::AttackConfig;
using attacks::AttackKind;

namespace {

struct RunDir {
  fs::path root;

  fs::path checkpoint(const std::string& name) const { return root / "checkpoints" / (name + ".ckpt"); }
  fs::path manifest(const std::string& tag) const { return root / "manifest" / (tag + ".jsonl"); }
  fs::path tensors(const std::string& tag) const { return root / "tensors" / (tag + ".apts"); }
  fs::path reports() const { return root / "reports"; }
  fs::path figures() const { return root / "reports" / "figures"; }
  fs::path logs() const { return root / "logs"; }
};

// Outputs are never silently replaced.
void claim(const fs::path& output, bool overwrite) {
  if (fs::exists(output) && !overwrite) {
    throw ConfigError(fmt::format("'{}' already exists; pass --overwrite to replace it", output.string()));
  }
}

std::vector<AttackKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<AttackKind> kinds;
  for (const auto& n : names) kinds.push_back(attacks::parse_attack_kind(n));
  return kinds;
}

std::vector<std::string> names_or(const RunConfig& cfg, std::vector<std::string> fallback) {
  return cfg.attacks.empty() ? fallback : cfg.attacks;
}

AttackConfig attack_config(const RunConfig& cfg, AttackKind kind) {
  auto a = AttackConfig::defaults(kind);
  a.iterations = kind == AttackKind::SQUARE ? a.iterations : cfg.iters;
  a.step_size = cfg.alpha;
  a.cw_constant = cfg.cw_c;
  a.cw_steps = cfg.cw_steps;
  a.cw_learning_rate = cfg.cw_lr;
  // L2 attacks are unbounded; their budget only records the norm.
  if (attacks::is_linf_kind(kind)) a.budget.epsilon = cfg.effective_epsilon();
  a.validate();
  return a;
}

std::vector<AttackConfig> attack_configs(const RunConfig& cfg, const std::vector<std::string>& names) {
  std::vector<AttackConfig> out;
  for (auto kind : parse_kinds(names)) out.push_back(attack_config(cfg, kind));
  return out;
}

datasets::LabeledImages load_split(const RunConfig& cfg, datasets::Split split) {
  auto data = datasets::load_dataset(cfg.dataset, split);
  const auto size = split == datasets::Split::Train ? cfg.subset_size : cfg.test_subset;
  return datasets::seeded_subset(data, size, attacks::image_seed(cfg.seed, split == datasets::Split::Train ? -11 : -12));
}

datasets::Split parse_split(const std::string& s) {
  if (s == "train") return datasets::Split::Train;
  if (s == "test") return datasets::Split::Test;
  throw ConfigError(fmt::format("unknown split '{}' (expected train or test)", s));
}

LoadedClassifier load_named_classifier(const RunDir& run, const std::string& name_or_path) {
  const fs::path candidate(name_or_path);
  if (candidate.extension() == ".ckpt") return load_classifier(candidate);
  const auto path = run.checkpoint(name_or_path);
  if (!fs::exists(path)) {
    throw MissingArtifactError(fmt::format("classifier checkpoint '{}' is missing; run `advpurify train-classifier "
                                           "--name {}` first",
                                           path.string(), name_or_path));
  }
  return load_classifier(path);
}

std::string classifier_name(const RunConfig& cfg) {
  return cfg.classifier.empty() ? "classifier" : cfg.classifier;
}

fs::path defense_path(const RunConfig& cfg, const RunDir& run, const std::string& fallback = "defense") {
  if (!cfg.checkpoint.empty()) {
    const fs::path p(cfg.checkpoint);
    return p.extension() == ".ckpt" ? p : run.checkpoint(cfg.checkpoint);
  }
  return run.checkpoint(fallback);
}

defense::DefenseCheckpoint load_named_defense(const RunConfig& cfg, const RunDir& run) {
  const auto path = defense_path(cfg, run);
  if (!fs::exists(path)) {
    throw MissingArtifactError(
        fmt::format("defense checkpoint '{}' is missing; run `advpurify train-defense` first", path.string()));
  }
  return defense::load_defense(path);
}

datasets::AdversarialDataset load_tagged(const RunDir& run, const std::string& tag) {
  const auto m = run.manifest(tag);
  if (!fs::exists(m)) {
    throw MissingArtifactError(fmt::format("adversarial dataset '{}' is missing; run `advpurify attack --split {}` "
                                           "first",
                                           m.string(), tag == "test" ? "test" : "train"));
  }
  return datasets::AdversarialDataset::load(m, run.tensors(tag));
}

datasets::LabeledImages test_images_of(const RunConfig& cfg) {
  return load_split(cfg, datasets::Split::Test);
}

// Trains a ConvNet-B feature network for the perceptual loss unless one exists.
ConvNet perceptual_network(const RunConfig& cfg, const RunDir& run) {
  const auto path = run.checkpoint("perceptual");
  if (!fs::exists(path)) {
    log::info("training the perceptual feature network (ConvNet-B)");
    const auto train = load_split(cfg, datasets::Split::Train);
    ClassifierTrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.seed = attacks::image_seed(cfg.seed, -21);
    const auto net = train_classifier(Architecture::ConvNetB, train.images, train.labels, train.num_classes, tc,
                                      "perceptual");
    save_classifier(path, *net, {{"role", "perceptual feature network"}, {"dataset", cfg.dataset}});
  }
  return load_classifier(path).classifier->network();
}

defense::PerceptualLoss perceptual_loss(const RunConfig& cfg, const RunDir& run) {
  return defense::PerceptualLoss(defense::PerceptualConfig{}, perceptual_network(cfg, run));
}

struct DefenseSetup {
  defense::GeneratorConfig generator;
  defense::DiscriminatorConfig discriminator;
  defense::LossWeights weights;
  defense::DefenseTrainConfig train;
};

DefenseSetup defense_setup(const RunConfig& cfg, ImageShape shape) {
  DefenseSetup s;
  s.generator = defense::GeneratorConfig::desk(shape);
  s.generator.residual_blocks = cfg.blocks;
  s.generator.base_channels = cfg.base_channels;
  s.generator.max_channels = std::max<std::int64_t>(s.generator.max_channels, cfg.base_channels);
  s.generator.dropout_rate = cfg.dropout;
  s.discriminator = defense::DiscriminatorConfig::desk(shape);
  s.discriminator.residual_blocks = cfg.blocks;
  s.weights = {cfg.lambda1, cfg.lambda2};
  s.train.epochs = cfg.defense_epochs;
  s.train.batch_size = cfg.batch_size;
  s.train.seed = cfg.seed;
  return s;
}

void print_fooling_rates(const Classifier& classifier, const datasets::AdversarialDataset& d) {
  for (const auto& name : d.attack_names()) {
    const auto subset = d.filter(attacks::parse_attack_kind(name));
    const auto clean_pred = classifier.predict(subset.clean_batch());
    const auto adv_pred = classifier.predict(subset.adversarial_batch());
    const auto correct = clean_pred.eq(subset.labels);
    const auto fooled = correct.logical_and(adv_pred.ne(subset.labels));
    const auto n_correct = correct.sum().item<std::int64_t>();
    const double rate = n_correct == 0 ? 0.0 : 100.0 * fooled.sum().item<double>() / static_cast<double>(n_correct);
    std::cout << fmt::format("{:<14} fooling rate {:6.2f}%  accuracy {:6.2f}%  ({} images)\n", name, rate,
                             eval::accuracy(classifier, subset.adversarial_batch(), subset.label_batch()),
                             subset.size());
  }
}

void print_report(const eval::EvaluationReport& report) {
  std::cout << fmt::format("{:<14} {:<10} {:>8} {:>9} {:>8}\n", "attack", "defense", "acc %", "PSNR dB", "MAE");
  for (const auto& r : report.rows) {
    std::cout << fmt::format("{:<14} {:<10} {:8.2f} {:>9} {:8.4f}\n", r.attack, r.defense_id, r.accuracy,
                             eval::format_number(std::round(r.psnr * 100.0) / 100.0), r.mae);
  }
}

// ---- commands -------------------------------------------------------------

void cmd_train_classifier(const RunConfig& cfg, const RunDir& run) {
  if (cfg.epochs < 1) throw ConfigError("--epochs must be >= 1");
  const auto name = cfg.name.empty() ? "classifier" : cfg.name;
  const auto out = run.checkpoint(name);
  claim(out, cfg.overwrite);
  const auto train = load_split(cfg, datasets::Split::Train);
  const auto test = test_images_of(cfg);
  ClassifierTrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.seed = cfg.seed;
  const auto arch = parse_architecture(cfg.arch);
  const auto clf = train_classifier(arch, train.images, train.labels, train.num_classes, tc, name);
  const auto acc = eval::accuracy(*clf, test.images, test.labels);
  save_classifier(out, *clf,
                  {{"dataset", cfg.dataset},
                   {"train_images", train.size()},
                   {"test_images", test.size()},
                   {"epochs", cfg.epochs},
                   {"seed", cfg.seed},
                   {"test_accuracy", acc}});
  std::cout << fmt::format("{} ({}) clean test accuracy {:.2f}% -> {}\n", name, to_string(arch), acc, out.string());
}

datasets::AdversarialDataset build_and_save(const RunConfig& cfg, const RunDir& run, const Classifier& clf,
                                            const std::string& fingerprint, datasets::Split split,
                                            const std::string& tag, const std::vector<std::string>& names) {
  const auto data = load_split(cfg, split);
  auto d = datasets::build_adversarial_dataset(data, clf, attack_configs(cfg, names),
                                               datasets::parse_composition_mode(cfg.mode), cfg.seed);
  d.manifest.provenance["classifier_fingerprint"] = fingerprint;
  d.refresh_fingerprint();
  d.save(run.manifest(tag), run.tensors(tag));
  return d;
}

void cmd_attack(const RunConfig& cfg, const RunDir& run) {
  const auto split = parse_split(cfg.split);
  const auto tag = cfg.tag.empty() ? cfg.split : cfg.tag;
  claim(run.manifest(tag), cfg.overwrite);
  const auto loaded = load_named_classifier(run, classifier_name(cfg));
  const auto d = build_and_save(cfg, run, *loaded.classifier, loaded.fingerprint, split, tag,
                                names_or(cfg, {"FGSM", "PGD", "CW"}));
  print_fooling_rates(*loaded.classifier, d);
  std::cout << fmt::format("{} records, fingerprint {} -> {}\n", d.size(), d.manifest.fingerprint,
                           run.manifest(tag).string());
}

defense::TrainingResult train_and_save(const RunConfig& cfg, const RunDir& run, const datasets::AdversarialDataset& pairs,
                                       const std::string& name) {
  const auto setup = defense_setup(cfg, ImageShape{pairs.adversarial.size(1), pairs.adversarial.size(2),
                                                   pairs.adversarial.size(3)});
  auto tc = setup.train;
  tc.log_path = run.logs() / (name + "-losses.jsonl");
  fs::create_directories(run.logs());
  fs::remove(*tc.log_path);
  auto result = eval::train_defense_on(pairs, setup.generator, setup.discriminator, perceptual_loss(cfg, run),
                                       setup.weights, tc);
  result.checkpoint.id = name;
  defense::save_defense(run.checkpoint(name), result.checkpoint);
  log::info("{} trained in {:.1f}s -> {}", name, result.wall_seconds, run.checkpoint(name).string());
  return result;
}

void cmd_train_defense(const RunConfig& cfg, const RunDir& run) {
  const auto name = cfg.name.empty() ? "defense" : cfg.name;
  claim(run.checkpoint(name), cfg.overwrite);
  auto pairs = load_tagged(run, cfg.tag.empty() ? "train" : cfg.tag);
  if (!cfg.attacks.empty()) {
    if (cfg.attacks.size() != 1) throw ConfigError("train-defense accepts at most one --attack filter");
    pairs = pairs.filter(attacks::parse_attack_kind(cfg.attacks.front()));
  }
  const auto result = train_and_save(cfg, run, pairs, name);
  const auto& last = result.history.back();
  std::cout << fmt::format("{}: {} pairs, {} epochs, final l1 {:.5f} perceptual {:.5f} gen_adv {:.4f} disc {:.4f}, "
                           "{:.1f}s\n",
                           name, pairs.size(), cfg.defense_epochs, last.l1, last.perceptual, last.gen_adv, last.disc,
                           result.wall_seconds);
}

void cmd_reconstruct(const RunConfig& cfg, const RunDir& run) {
  const auto tag = cfg.tag.empty() ? "test" : cfg.tag;
  const auto out = run.tensors(tag + "-reconstructed");
  claim(out, cfg.overwrite);
  const auto ckpt = load_named_defense(cfg, run);
  const auto d = load_tagged(run, tag);
  const auto rec = defense::reconstruct(ckpt, d.adversarial_batch());
  datasets::save_tensors(out, {{"reconstructed", rec.tensor()}, {"labels", d.labels}});
  const auto before = eval::psnr(d.adversarial_batch(), d.clean_batch());
  const auto after = eval::psnr(rec, d.clean_batch());
  std::cout << fmt::format("reconstructed {} images: PSNR {:.2f} -> {:.2f} dB -> {}\n", rec.size(), before.mean_db,
                           after.mean_db, out.string());
}

void save_fig4(const eval::EvaluationReport& report, const fs::path& path, const std::string& defense_id) {
  eval::Series psnr_att{"attacked", {}, {}}, psnr_rec{"restored", {}, {}};
  eval::Series mae_att{"attacked", {}, {}}, mae_rec{"restored", {}, {}};
  std::vector<std::string> attack_names;
  for (const auto& r : report.rows) {
    if (r.attack == datasets::kCleanTag || r.defense_id != eval::kNoDefense) continue;
    const auto* def = report.find(r.attack, defense_id);
    if (def == nullptr) continue;
    const auto x = static_cast<double>(attack_names.size() + 1);
    attack_names.push_back(r.attack);
    psnr_att.x.push_back(x);
    psnr_att.y.push_back(r.psnr);
    psnr_rec.x.push_back(x);
    psnr_rec.y.push_back(def->psnr);
    mae_att.x.push_back(x);
    mae_att.y.push_back(r.mae);
    mae_rec.x.push_back(x);
    mae_rec.y.push_back(def->mae);
  }
  if (attack_names.empty()) return;
  std::string labels;
  for (std::size_t i = 0; i < attack_names.size(); ++i) labels += fmt::format("{}{}={}", i ? ", " : "", i + 1, attack_names[i]);
  eval::save_line_plot(path.parent_path() / (path.stem().string() + "_psnr.svg"), {psnr_att, psnr_rec},
                       {"PSNR vs clean", "attack (" + labels + ")", "PSNR (dB)", std::nullopt});
  eval::save_line_plot(path.parent_path() / (path.stem().string() + "_mae.svg"), {mae_att, mae_rec},
                       {"MAE vs clean", "attack (" + labels + ")", "MAE", std::nullopt});
}

void cmd_evaluate(const RunConfig& cfg, const RunDir& run) {
  const auto stem = cfg.name.empty() ? "defense_table" : cfg.name;
  claim(run.reports() / (stem + ".jsonl"), cfg.overwrite);
  const auto loaded = load_named_classifier(run, classifier_name(cfg));
  const auto ckpt = load_named_defense(cfg, run);
  const auto defense_file = defense_path(cfg, run);
  auto attacked = load_tagged(run, cfg.tag.empty() ? "test" : cfg.tag);
  const auto test = test_images_of(cfg);

  eval::Provenance prov;
  prov.seed = cfg.seed;
  prov.checkpoints = {loaded.fingerprint, datasets::sha256_hex(datasets::read_file(defense_file))};
  if (cfg.png_roundtrip) {
    const auto scratch = run.root / "png" / "roundtrip";
    fs::remove_all(scratch);
    attacked.adversarial = datasets::png_roundtrip(attacked.adversarial_batch(), scratch).tensor();
  }
  auto report = eval::defense_table(*loaded.classifier, test, attacked, ckpt, ckpt.id, prov);
  if (cfg.png_roundtrip) report.mark_quantized();
  report.save(run.reports(), stem);
  save_fig4(report, run.figures() / (stem + "_fig4.svg"), ckpt.id);
  print_report(report);
}

void cmd_sweep(const RunConfig& cfg, const RunDir& run) {
  const auto stem = cfg.name.empty() ? "sweep" : cfg.name;
  claim(run.reports() / (stem + ".jsonl"), cfg.overwrite);
  const auto loaded = load_named_classifier(run, classifier_name(cfg));
  const auto ckpt = load_named_defense(cfg, run);
  const auto test = test_images_of(cfg);
  eval::SweepConfig sc;
  sc.kinds = parse_kinds(names_or(cfg, {"PGD", "MIFGSM"}));
  if (!cfg.sweep_iters.empty()) sc.iterations = cfg.sweep_iters;
  if (!cfg.sweep_eps.empty()) sc.epsilons = cfg.sweep_eps;
  sc.step_size = cfg.alpha;
  sc.seed = cfg.seed;
  eval::Provenance prov;
  prov.seed = cfg.seed;
  prov.checkpoints = {loaded.fingerprint, datasets::sha256_hex(datasets::read_file(defense_path(cfg, run)))};
  auto result = eval::robustness_sweep(*loaded.classifier, ckpt, ckpt.id, test, sc, prov);
  result.report.save(run.reports(), stem);
  result.save_plots(run.figures());
  std::cout << fmt::format("{} cells\n", result.cells.size());
  for (auto kind : sc.kinds) {
    for (auto eps : sc.epsilons) {
      std::cout << fmt::format("{:<8} eps {:.4f}: defended accuracy band {:.2f} points\n", attacks::to_string(kind), eps,
                               result.stability_band(kind, eps));
    }
  }
}

datasets::AdversarialDataset reuse_or_build(const RunConfig& cfg, const RunDir& run, const LoadedClassifier& clf,
                                            datasets::Split split, const std::string& tag,
                                            const std::vector<std::string>& names) {
  if (fs::exists(run.manifest(tag)) && !cfg.overwrite) {
    log::info("reusing adversarial dataset {}", run.manifest(tag).string());
    return datasets::AdversarialDataset::load(run.manifest(tag), run.tensors(tag));
  }
  return build_and_save(cfg, run, *clf.classifier, clf.fingerprint, split, tag, names);
}

defense::DefenseCheckpoint reuse_or_train(const RunConfig& cfg, const RunDir& run,
                                          const datasets::AdversarialDataset& pairs, const std::string& name) {
  if (fs::exists(run.checkpoint(name)) && !cfg.overwrite) {
    log::info("reusing defense {}", run.checkpoint(name).string());
    return defense::load_defense(run.checkpoint(name));
  }
  return train_and_save(cfg, run, pairs, name).checkpoint;
}

void cmd_matrix(const RunConfig& cfg, const RunDir& run) {
  const auto stem = cfg.name.empty() ? "matrix" : cfg.name;
  claim(run.reports() / (stem + ".json"), cfg.overwrite);
  const auto loaded = load_named_classifier(run, classifier_name(cfg));
  const auto trained = names_or(cfg, {"FGSM", "BIM", "PGD", "MIFGSM", "CW", "AUTOCOMPOSITE"});
  std::vector<std::string> canonical;
  for (auto k : parse_kinds(trained)) canonical.emplace_back(attacks::to_string(k));
  const std::string held_out(attacks::to_string(attacks::parse_attack_kind(cfg.held_out)));
  if (std::find(canonical.begin(), canonical.end(), held_out) != canonical.end()) {
    throw ConfigError(fmt::format("the held-out attack {} cannot also be a training attack", held_out));
  }
  auto all = canonical;
  all.push_back(held_out);

  const auto train_pairs = reuse_or_build(cfg, run, loaded, datasets::Split::Train, "matrix-train", canonical);
  const auto test_attacked = reuse_or_build(cfg, run, loaded, datasets::Split::Test, "matrix-test", all);

  std::vector<defense::DefenseCheckpoint> ckpts;
  std::vector<std::string> names;
  std::vector<std::string> trained_on;
  for (const auto& a : canonical) {
    names.push_back("Model_" + a);
    trained_on.push_back(a);
    ckpts.push_back(reuse_or_train(cfg, run, train_pairs.filter(attacks::parse_attack_kind(a)), "matrix-" + a));
  }
  names.emplace_back("Model_Combined");
  trained_on.emplace_back("COMBINED");
  ckpts.push_back(reuse_or_train(cfg, run, train_pairs, "matrix-combined"));

  std::vector<eval::MatrixModel> models;
  for (std::size_t i = 0; i < ckpts.size(); ++i) models.push_back({names[i], trained_on[i], &ckpts[i]});
  std::vector<std::string> conditions{datasets::kCleanTag};
  conditions.insert(conditions.end(), all.begin(), all.end());
  const auto m = eval::generalizability_matrix(*loaded.classifier, models, test_images_of(cfg), test_attacked,
                                               conditions);
  fs::create_directories(run.reports());
  auto j = m.to_json();
  j["provenance"] = {{"seed", cfg.seed},
                     {"manifests", {train_pairs.manifest.fingerprint, test_attacked.manifest.fingerprint}},
                     {"classifier", loaded.fingerprint},
                     {"tensor_path", true}};
  datasets::write_file_atomic(run.reports() / (stem + ".json"), j.dump(2) + "\n");
  datasets::write_file_atomic(run.reports() / (stem + ".csv"), m.to_csv());
  std::cout << m.to_csv();
}

void cmd_ablate(const RunConfig& cfg, const RunDir& run) {
  const auto stem = cfg.name.empty() ? "ablation" : cfg.name;
  claim(run.reports() / (stem + ".jsonl"), cfg.overwrite);
  const auto loaded = load_named_classifier(run, classifier_name(cfg));
  const auto train_pairs = load_tagged(run, "train");
  const auto test_attacked = load_tagged(run, "test");
  const auto shape = ImageShape{train_pairs.adversarial.size(1), train_pairs.adversarial.size(2),
                                train_pairs.adversarial.size(3)};
  const auto setup = defense_setup(cfg, shape);
  eval::AblationConfig ac;
  if (!cfg.ablation_blocks.empty()) ac.block_counts = cfg.ablation_blocks;
  ac.generator = setup.generator;
  ac.discriminator = setup.discriminator;
  ac.weights = setup.weights;
  ac.train = setup.train;
  eval::Provenance prov;
  prov.seed = cfg.seed;
  prov.checkpoints = {loaded.fingerprint};
  const auto result = eval::ablation_residual_blocks(*loaded.classifier, train_pairs, test_attacked,
                                                     perceptual_loss(cfg, run), ac, prov);
  result.report.save(run.reports(), stem);
  datasets::write_file_atomic(run.reports() / (stem + "_arms.json"), result.to_json().dump(2) + "\n");

  eval::Series time{"training time (s)", {}, {}};
  eval::Series l1{"L1", {}, {}}, perc{"perceptual", {}, {}}, gen{"generator adversarial", {}, {}};
  for (const auto& arm : result.arms) {
    if (!arm.final_losses) continue;
    const auto x = static_cast<double>(arm.blocks);
    time.x.push_back(x);
    time.y.push_back(arm.wall_seconds);
    l1.x.push_back(x);
    l1.y.push_back(arm.final_losses->l1);
    perc.x.push_back(x);
    perc.y.push_back(arm.final_losses->perceptual);
    gen.x.push_back(x);
    gen.y.push_back(arm.final_losses->gen_adv);
  }
  if (!time.x.empty()) {
    eval::save_line_plot(run.figures() / (stem + "_time.svg"), {time},
                         {"Training time vs residual blocks", "residual blocks", "seconds", std::nullopt});
    eval::save_line_plot(run.figures() / (stem + "_losses.svg"), {l1, perc, gen},
                         {"Final losses vs residual blocks", "residual blocks", "loss", std::nullopt});
  }
  for (const auto& arm : result.arms) {
    std::string accs;
    for (const auto& [k, v] : arm.defended_accuracy) accs += fmt::format(" {}={:.2f}", k, v);
    std::cout << fmt::format("blocks {:>2}: {:.1f}s{}{}\n", arm.blocks, arm.wall_seconds, accs,
                             arm.failure ? " FAILED: " + *arm.failure : "");
  }
}

void cmd_transfer(const RunConfig& cfg, const RunDir& run) {
  const auto stem = cfg.name.empty() ? "transfer" : cfg.name;
  claim(run.reports() / (stem + ".jsonl"), cfg.overwrite);
  if (cfg.targets.empty()) throw ConfigError("transfer needs --targets naming classifier checkpoints");
  const auto source = load_named_classifier(run, classifier_name(cfg));
  const auto ckpt = load_named_defense(cfg, run);
  std::vector<LoadedClassifier> loaded;
  for (const auto& t : cfg.targets) loaded.push_back(load_named_classifier(run, t));
  std::vector<const Classifier*> targets;
  eval::Provenance prov;
  prov.seed = cfg.seed;
  prov.checkpoints = {source.fingerprint, datasets::sha256_hex(datasets::read_file(defense_path(cfg, run)))};
  for (const auto& l : loaded) {
    targets.push_back(l.classifier.get());
    prov.checkpoints.push_back(l.fingerprint);
  }
  const auto report = eval::cross_model_transfer(ckpt, ckpt.id, source.classifier->id(), targets, test_images_of(cfg),
                                                 attack_configs(cfg, names_or(cfg, {"FGSM", "PGD", "CW"})), cfg.seed,
                                                 prov);
  report.save(run.reports(), stem);
  print_report(report);
}

void cmd_make_paper_figures(RunConfig cfg, const RunDir& run) {
  auto step = [&](const std::string& what, const fs::path& artifact, const std::function<void()>& fn) {
    if (fs::exists(artifact) && !cfg.overwrite) {
      log::info("{}: reusing {}", what, artifact.string());
      return;
    }
    log::info("{}", what);
    fn();
  };
  step("train classifier", run.checkpoint("classifier"), [&] {
    auto c = cfg;
    c.name = "classifier";
    cmd_train_classifier(c, run);
  });
  for (const auto* split : {"train", "test"}) {
    step(fmt::format("attack {} split", split), run.manifest(split), [&] {
      auto c = cfg;
      c.split = split;
      c.tag = split;
      cmd_attack(c, run);
    });
  }
  step("train defense", run.checkpoint("defense"), [&] {
    auto c = cfg;
    c.name = "defense";
    c.attacks.clear();
    cmd_train_defense(c, run);
  });
  step("defense table", run.reports() / "defense_table.jsonl", [&] {
    auto c = cfg;
    c.name = "defense_table";
    cmd_evaluate(c, run);
  });
  step("robustness sweep", run.reports() / "sweep.jsonl", [&] {
    auto c = cfg;
    c.name = "sweep";
    c.attacks.clear();
    cmd_sweep(c, run);
  });
  step("generalizability matrix", run.reports() / "matrix.json", [&] {
    auto c = cfg;
    c.name = "matrix";
    c.attacks.clear();
    cmd_matrix(c, run);
  });
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArchitectureError*>(&e)) return kUsage;
  if (dynamic_cast<const MissingArtifactError*>(&e) || dynamic_cast<const DataError*>(&e)) return kMissingInput;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const CorruptTensorError*>(&e)) return kBadFile;
  if (dynamic_cast<const DivergenceError*>(&e)) return kDiverged;
  return kFailure;
}

std::string option_key(const CLI::Option* opt) {
  auto key = opt->get_single_name();
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Adversarial attacks and a residual image-translation purification defense"};
  app.require_subcommand(1);
  RunConfig flags;
  std::string config_file;

  const std::map<std::string, std::string> commands{
      {"train-classifier", "train a reference classifier and record its clean test accuracy"},
      {"attack", "build an adversarial-pair dataset (manifest + tensors)"},
      {"train-defense", "train the purification defense on adversarial pairs"},
      {"reconstruct", "purify an adversarial dataset with a trained defense"},
      {"evaluate", "accuracy / PSNR / MAE table with and without the defense"},
      {"sweep", "defended accuracy over attack iterations and epsilons"},
      {"matrix", "per-attack and combined defenses against every attack, with G"},
      {"ablate", "train and evaluate defenses over residual block counts"},
      {"transfer", "evaluate a defense on attacks against other classifiers"},
      {"make-paper-figures", "chain the desk-scale table, figure, sweep and matrix runs"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_file, "JSON file with default settings");
    sub->add_option("--dataset", flags.dataset, "mnist, fashion-mnist or cifar10");
    sub->add_option("--seed", flags.seed);
    sub->add_option("--run-dir", flags.run_dir, "run directory (default runs/<dataset>-seed<seed>)");
    sub->add_option("--subset-size", flags.subset_size, "training images drawn from the train split");
    sub->add_option("--test-subset", flags.test_subset, "test images drawn from the test split");
    sub->add_option("--split", flags.split, "train or test");
    sub->add_option("--tag", flags.tag, "adversarial dataset tag");
    sub->add_option("--name", flags.name, "output checkpoint or report name");
    sub->add_option("--arch", flags.arch, "ConvNet-A or ConvNet-B");
    sub->add_option("--epochs", flags.epochs, "classifier training epochs");
    sub->add_option("--defense-epochs", flags.defense_epochs);
    sub->add_option("--batch-size", flags.batch_size);
    sub->add_option("--attack", flags.attacks, "attack kinds (repeat or comma-separate)")->delimiter(',');
    sub->add_option("--epsilon", flags.epsilon, "L-inf budget in [0,1] pixel units");
    sub->add_option("--iters", flags.iters);
    sub->add_option("--alpha", flags.alpha, "step size");
    sub->add_option("--cw-c", flags.cw_c);
    sub->add_option("--cw-steps", flags.cw_steps);
    sub->add_option("--cw-lr", flags.cw_lr);
    sub->add_option("--mode", flags.mode, "cross-product or partition");
    sub->add_option("--checkpoint", flags.checkpoint, "defense checkpoint name or .ckpt path");
    sub->add_option("--classifier", flags.classifier, "classifier checkpoint name or .ckpt path");
    sub->add_option("--blocks", flags.blocks, "residual blocks per level");
    sub->add_option("--base-channels", flags.base_channels, "generator width at the first level");
    sub->add_option("--dropout", flags.dropout, "generator decoder dropout rate");
    sub->add_option("--lambda1", flags.lambda1);
    sub->add_option("--lambda2", flags.lambda2);
    sub->add_flag("--png-roundtrip", flags.png_roundtrip, "pass attacked images through 8-bit PNG files");
    sub->add_flag("--overwrite", flags.overwrite, "replace existing outputs");
    sub->add_option("--targets", flags.targets, "target classifier names")->delimiter(',');
    sub->add_option("--sweep-eps", flags.sweep_eps)->delimiter(',');
    sub->add_option("--sweep-iters", flags.sweep_iters)->delimiter(',');
    sub->add_option("--ablation-blocks", flags.ablation_blocks)->delimiter(',');
    sub->add_option("--held-out", flags.held_out);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  auto* sub = app.get_subcommands().front();
  try {
    RunConfig cfg;
    cfg.command = sub->get_name();
    if (!config_file.empty()) {
      const auto text = datasets::read_file(config_file);
      try {
        cfg.merge(nlohmann::json::parse(text));
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("'{}' is not valid JSON: {}", config_file, e.what()));
      }
    }
    const auto flag_json = flags.to_json();
    nlohmann::json given = nlohmann::json::object();
    for (auto* opt : sub->get_options()) {
      if (opt->count() == 0) continue;
      const auto key = option_key(opt);
      if (key == "config" || key == "help") continue;
      const auto json_key = key == "attack" ? std::string("attack") : key;
      if (flag_json.contains(json_key)) given[json_key] = flag_json.at(json_key);
    }
    cfg.merge(given);

    const RunDir run{cfg.root()};
    fs::create_directories(run.root / "config");
    fs::create_directories(run.logs());
    log::add_file_sink(run.logs() / (cfg.command + ".log"));
    datasets::write_file_atomic(run.root / "config" / (cfg.command + ".json"), cfg.to_json().dump(2) + "\n");
    log::info("{} in {}", cfg.command, run.root.string());

    const std::map<std::string, std::function<void(const RunConfig&, const RunDir&)>> handlers{
        {"train-classifier", cmd_train_classifier},
        {"attack", cmd_attack},
        {"train-defense", cmd_train_defense},
        {"reconstruct", cmd_reconstruct},
        {"evaluate", cmd_evaluate},
        {"sweep", cmd_sweep},
        {"matrix", cmd_matrix},
        {"ablate", cmd_ablate},
        {"transfer", cmd_transfer},
        {"make-paper-figures", cmd_make_paper_figures},
    };
    handlers.at(cfg.command)(cfg, run);
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace advpurify::cli
