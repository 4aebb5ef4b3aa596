#pragma once

#include "advpurify/core/classifier.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace advpurify {

// Desk-scale stand-ins for the ImageNet target models.
//   ConvNet-A: conv16-pool, conv32-pool, dense64, dense(classes)
//   ConvNet-B: conv12-pool, conv24-pool, conv48, dense(classes)
enum class Architecture { ConvNetA, ConvNetB };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view text);

struct ConvNetImpl : torch::nn::Cloneable<ConvNetImpl> {
  ConvNetImpl(Architecture arch, ImageShape shape, std::int64_t num_classes);

  void reset() override;
  torch::Tensor forward(torch::Tensor x);

  // Named intermediate outputs in forward order: "input", "block1", ...,
  // "blockK", "logits".
  std::vector<std::pair<std::string, torch::Tensor>> stages(torch::Tensor x);
  std::vector<std::string> stage_names() const;

  Architecture arch;
  ImageShape shape;
  std::int64_t num_classes;
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::Sequential head{nullptr};
};
TORCH_MODULE(ConvNet);

class TorchClassifier final : public Classifier {
 public:
  TorchClassifier(ConvNet net, std::string id);

  std::string id() const override { return id_; }
  std::int64_t num_classes() const override { return net_->num_classes; }
  ImageShape input_shape() const override { return net_->shape; }
  torch::Tensor forward(const torch::Tensor& x) const override;
  std::unique_ptr<Classifier> to_double() const override;

  Architecture architecture() const { return net_->arch; }
  ConvNet network() const { return net_; }

 private:
  ConvNet net_;
  std::string id_;
};

struct ClassifierTrainConfig {
  int epochs = 8;
  std::int64_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

std::shared_ptr<TorchClassifier> train_classifier(Architecture arch, const ImageBatch& images,
                                                  const LabelBatch& labels, std::int64_t num_classes,
                                                  const ClassifierTrainConfig& config, std::string id);

void save_classifier(const std::filesystem::path& path, const TorchClassifier& classifier,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct LoadedClassifier {
  std::shared_ptr<TorchClassifier> classifier;
  nlohmann::json metadata;
  std::string fingerprint;
};

LoadedClassifier load_classifier(const std::filesystem::path& path);

}  // namespace advpurify
