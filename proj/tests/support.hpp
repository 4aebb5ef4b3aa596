#pragma once

#include "advpurify/core/reference_classifiers.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <random>
#include <string>

namespace advpurify::testing {

inline std::shared_ptr<TorchClassifier> random_convnet(Architecture arch = Architecture::ConvNetA,
                                                       ImageShape shape = {1, 28, 28}, std::uint64_t seed = 0) {
  torch::manual_seed(seed);
  return std::make_shared<TorchClassifier>(ConvNet(arch, shape, 10), "random");
}

inline ImageBatch random_images(std::int64_t n, ImageShape shape = {1, 28, 28}, std::uint64_t seed = 0) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return ImageBatch(torch::rand({n, shape.channels, shape.height, shape.width}, gen));
}

inline LabelBatch random_labels(std::int64_t n, std::int64_t classes = 10, std::uint64_t seed = 0) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return LabelBatch(torch::randint(classes, {n}, gen, torch::kLong));
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("advpurify-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace advpurify::testing
