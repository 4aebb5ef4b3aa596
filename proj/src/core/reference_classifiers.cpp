#include "advpurify/core/reference_classifiers.hpp"

#include "advpurify/core/errors.hpp"
#include "advpurify/datasets/tensor_io.hpp"

#include <fmt/format.h>
#include "advpurify/core/log.hpp"

namespace advpurify {

namespace nn = torch::nn;

std::string_view to_string(Architecture arch) {
  return arch == Architecture::ConvNetA ? "ConvNet-A" : "ConvNet-B";
}

Architecture parse_architecture(std::string_view text) {
  if (text == "ConvNet-A" || text == "convnet-a" || text == "A") return Architecture::ConvNetA;
  if (text == "ConvNet-B" || text == "convnet-b" || text == "B") return Architecture::ConvNetB;
  throw ConfigError(fmt::format("unknown architecture '{}' (expected ConvNet-A or ConvNet-B)", text));
}

ConvNetImpl::ConvNetImpl(Architecture arch, ImageShape shape, std::int64_t num_classes)
    : arch(arch), shape(shape), num_classes(num_classes) {
  if (shape.height % 4 != 0 || shape.width % 4 != 0) {
    throw ArchitectureError("reference classifiers need height and width divisible by 4");
  }
  reset();
}

void ConvNetImpl::reset() {
  auto conv_block = [](std::int64_t in, std::int64_t out, bool pool) {
    nn::Sequential block(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)), nn::ReLU());
    if (pool) block->push_back(nn::MaxPool2d(2));
    return block;
  };
  const auto spatial = (shape.height / 4) * (shape.width / 4);
  blocks = nn::ModuleList();
  if (arch == Architecture::ConvNetA) {
    blocks->push_back(conv_block(shape.channels, 16, true));
    blocks->push_back(conv_block(16, 32, true));
    head = nn::Sequential(nn::Flatten(), nn::Linear(32 * spatial, 64), nn::ReLU(), nn::Linear(64, num_classes));
  } else {
    blocks->push_back(conv_block(shape.channels, 12, true));
    blocks->push_back(conv_block(12, 24, true));
    blocks->push_back(conv_block(24, 48, false));
    head = nn::Sequential(nn::Flatten(), nn::Linear(48 * spatial, num_classes));
  }
  register_module("blocks", blocks);
  register_module("head", head);
}

torch::Tensor ConvNetImpl::forward(torch::Tensor x) {
  for (const auto& block : *blocks) x = block->as<nn::Sequential>()->forward(x);
  return head->forward(x);
}

std::vector<std::pair<std::string, torch::Tensor>> ConvNetImpl::stages(torch::Tensor x) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  out.emplace_back("input", x);
  std::size_t k = 1;
  for (const auto& block : *blocks) {
    x = block->as<nn::Sequential>()->forward(x);
    out.emplace_back(fmt::format("block{}", k++), x);
  }
  out.emplace_back("logits", head->forward(x));
  return out;
}

std::vector<std::string> ConvNetImpl::stage_names() const {
  std::vector<std::string> names{"input"};
  for (std::size_t k = 1; k <= blocks->size(); ++k) names.push_back(fmt::format("block{}", k));
  names.emplace_back("logits");
  return names;
}

TorchClassifier::TorchClassifier(ConvNet net, std::string id) : net_(std::move(net)), id_(std::move(id)) {
  net_->eval();
  for (auto& p : net_->parameters()) p.requires_grad_(false);
}

torch::Tensor TorchClassifier::forward(const torch::Tensor& x) const {
  return net_.ptr()->forward(x);
}

std::unique_ptr<Classifier> TorchClassifier::to_double() const {
  auto copy = std::dynamic_pointer_cast<ConvNetImpl>(net_->clone());
  copy->to(torch::kFloat64);
  return std::make_unique<TorchClassifier>(ConvNet(copy), id_);
}

std::shared_ptr<TorchClassifier> train_classifier(Architecture arch, const ImageBatch& images,
                                                  const LabelBatch& labels, std::int64_t num_classes,
                                                  const ClassifierTrainConfig& config, std::string id) {
  if (config.epochs < 1) throw ConfigError("classifier training needs epochs >= 1");
  if (config.batch_size < 1) throw ConfigError("batch size must be positive");
  labels.check_pairs_with(images);
  labels.check_range(num_classes);

  torch::manual_seed(config.seed);
  ConvNet net(arch, images.shape(), num_classes);
  torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(config.learning_rate));
  auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed);

  const auto n = images.size();
  net->train();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = torch::randperm(n, gen, torch::kLong);
    double total = 0.0;
    for (std::int64_t start = 0; start < n; start += config.batch_size) {
      const auto idx = order.slice(0, start, std::min(n, start + config.batch_size));
      optimizer.zero_grad();
      auto loss = torch::nn::functional::cross_entropy(net->forward(images.tensor().index_select(0, idx)),
                                                       labels.tensor().index_select(0, idx));
      loss.backward();
      optimizer.step();
      total += loss.item<double>() * static_cast<double>(idx.size(0));
    }
    log::debug("{} epoch {} loss {:.4f}", to_string(arch), epoch + 1, total / static_cast<double>(n));
  }
  return std::make_shared<TorchClassifier>(net, std::move(id));
}

void save_classifier(const std::filesystem::path& path, const TorchClassifier& classifier,
                     const nlohmann::json& metadata) {
  const auto shape = classifier.input_shape();
  nlohmann::json header = {
      {"kind", "classifier"},
      {"format_version", datasets::kCheckpointFormatVersion},
      {"id", classifier.id()},
      {"architecture", to_string(classifier.architecture())},
      {"input_shape", {shape.channels, shape.height, shape.width}},
      {"num_classes", classifier.num_classes()},
      {"metadata", metadata},
  };
  datasets::write_checkpoint_file(path, header, datasets::module_state(*classifier.network()));
}

LoadedClassifier load_classifier(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingArtifactError(fmt::format("classifier checkpoint '{}' does not exist", path.string()));
  }
  auto file = datasets::read_checkpoint_file(path);
  const auto& h = file.header;
  if (h.value("kind", "") != "classifier") throw FormatError(fmt::format("'{}' is not a classifier checkpoint", path.string()));
  const auto dims = h.at("input_shape").get<std::vector<std::int64_t>>();
  ConvNet net(parse_architecture(h.at("architecture").get<std::string>()), ImageShape{dims.at(0), dims.at(1), dims.at(2)},
              h.at("num_classes").get<std::int64_t>());
  datasets::load_module_state(*net, file.tensors);
  LoadedClassifier loaded;
  loaded.classifier = std::make_shared<TorchClassifier>(net, h.at("id").get<std::string>());
  loaded.metadata = h.value("metadata", nlohmann::json::object());
  loaded.fingerprint = datasets::sha256_hex(datasets::read_file(path));
  return loaded;
}

}  // namespace advpurify
