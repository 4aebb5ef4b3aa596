#include "advpurify/defense/trainer.hpp"

#include "advpurify/core/errors.hpp"

#include <fmt/format.h>
#include "advpurify/core/log.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace advpurify::defense {

void DefenseTrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("defense training needs at least one epoch");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
}

nlohmann::json DefenseTrainConfig::to_json() const {
  return {{"epochs", epochs},           {"batch_size", batch_size}, {"learning_rate", learning_rate},
          {"betas", {beta1, beta2}},    {"seed", seed}};
}

nlohmann::json EpochLog::to_json() const {
  return {{"epoch", epoch}, {"l1", l1},     {"perceptual", perceptual},
          {"gen_adv", gen_adv}, {"disc", disc}, {"seconds", seconds}};
}

namespace {

void guard(const torch::Tensor& loss, const char* name, int epoch, std::int64_t batch) {
  const auto v = loss.item<double>();
  if (!std::isfinite(v)) {
    throw DivergenceError(fmt::format("{} loss became {} at epoch {} batch {}", name, v, epoch, batch));
  }
}

}  // namespace

TrainingResult train_defense(const ImageBatch& attacked, const ImageBatch& clean, const GeneratorConfig& gcfg,
                             const DiscriminatorConfig& dcfg, const PerceptualLoss& perceptual,
                             const LossWeights& weights, const DefenseTrainConfig& tcfg, TrainingManifest manifest,
                             const EpochCallback& on_epoch) {
  tcfg.validate();
  weights.validate();
  if (attacked.size() != clean.size() || attacked.shape() != clean.shape()) {
    throw DataError("attacked and clean images do not pair up");
  }
  if (gcfg.input_shape != attacked.shape() || dcfg.input_shape != attacked.shape()) {
    throw ShapeError(fmt::format("networks configured for {} but data is {}", gcfg.input_shape.to_string(),
                                 attacked.shape().to_string()));
  }

  torch::manual_seed(tcfg.seed);
  Generator generator(gcfg);
  Discriminator discriminator(dcfg);
  torch::optim::Adam g_opt(generator->parameters(), torch::optim::AdamOptions(tcfg.learning_rate)
                                                        .betas({tcfg.beta1, tcfg.beta2}));
  torch::optim::Adam d_opt(discriminator->parameters(), torch::optim::AdamOptions(tcfg.learning_rate)
                                                            .betas({tcfg.beta1, tcfg.beta2}));
  generator->train();
  discriminator->train();

  std::ofstream log;
  if (tcfg.log_path) {
    log.open(*tcfg.log_path, std::ios::app);
    if (!log) throw DataError(fmt::format("cannot open training log '{}'", tcfg.log_path->string()));
  }

  const auto n = attacked.size();
  const auto& x_all = attacked.tensor();
  const auto& y_all = clean.tensor();
  TrainingResult result;
  const auto t0 = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto e0 = std::chrono::steady_clock::now();
    const auto order = torch::randperm(n, torch::kLong);
    EpochLog rec;
    rec.epoch = epoch;
    std::int64_t batches = 0;
    for (std::int64_t start = 0; start < n; start += tcfg.batch_size) {
      const auto idx = order.slice(0, start, std::min(n, start + tcfg.batch_size));
      // BatchNorm cannot normalize a single sample in train mode.
      if (idx.size(0) < 2 && batches > 0) break;
      const auto x = x_all.index_select(0, idx);
      const auto y = y_all.index_select(0, idx);

      const auto fake = generator->forward(x);

      d_opt.zero_grad();
      const auto d_loss =
          discriminator_loss_from_logits(discriminator->forward(x, y), discriminator->forward(x, fake.detach()));
      guard(d_loss, "discriminator", epoch, batches);
      d_loss.backward();
      d_opt.step();

      g_opt.zero_grad();
      const auto adv = generator_adversarial_loss_from_logits(discriminator->forward(x, fake));
      const auto l1 = l1_pixel_loss(y, fake);
      const auto perc = perceptual(y, fake);
      const auto total = total_generator_objective(adv, l1, perc, weights);
      guard(total, "generator", epoch, batches);
      total.backward();
      g_opt.step();

      rec.l1 += l1.item<double>();
      rec.perceptual += perc.item<double>();
      rec.gen_adv += adv.item<double>();
      rec.disc += d_loss.item<double>();
      ++batches;
    }
    rec.l1 /= static_cast<double>(batches);
    rec.perceptual /= static_cast<double>(batches);
    rec.gen_adv /= static_cast<double>(batches);
    rec.disc /= static_cast<double>(batches);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - e0).count();
    log::info("defense epoch {}/{}: l1 {:.5f} perceptual {:.5f} gen_adv {:.4f} disc {:.4f} ({:.1f}s)", epoch,
                 tcfg.epochs, rec.l1, rec.perceptual, rec.gen_adv, rec.disc, rec.seconds);
    if (log) log << rec.to_json().dump() << '\n' << std::flush;
    if (on_epoch) on_epoch(rec);
    result.history.push_back(rec);
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  generator->eval();
  discriminator->eval();
  for (auto& p : generator->parameters()) p.requires_grad_(false);
  for (auto& p : discriminator->parameters()) p.requires_grad_(false);

  manifest.epochs = tcfg.epochs;
  manifest.seed = tcfg.seed;
  manifest.pairs = n;
  auto& ckpt = result.checkpoint;
  ckpt.generator_config = gcfg;
  ckpt.discriminator_config = dcfg;
  ckpt.perceptual_config = perceptual.config();
  ckpt.loss_weights = weights;
  ckpt.manifest = std::move(manifest);
  ckpt.generator = generator;
  ckpt.discriminator = discriminator;
  return result;
}

}  // namespace advpurify::defense
