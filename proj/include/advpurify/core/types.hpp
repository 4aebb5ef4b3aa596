#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <string_view>

namespace advpurify {

struct ImageShape {
  std::int64_t channels = 1;
  std::int64_t height = 28;
  std::int64_t width = 28;

  std::int64_t numel() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
  std::string to_string() const;
};

// A batch of images laid out as (N, C, H, W) float32 with every element
// finite and inside [0, 1]. The wrapped tensor is never modified in place;
// all operations produce new batches.
class ImageBatch {
 public:
  // Validates shape, dtype, finiteness and the [0, 1] box.
  explicit ImageBatch(torch::Tensor data);

  const torch::Tensor& tensor() const { return data_; }
  std::int64_t size() const { return data_.size(0); }
  ImageShape shape() const;

  ImageBatch slice(std::int64_t begin, std::int64_t end) const;
  ImageBatch select(const torch::Tensor& indices) const;
  ImageBatch clone() const { return ImageBatch(data_.clone()); }

  static ImageBatch concat(const std::vector<ImageBatch>& parts);

 private:
  struct Trusted {};
  ImageBatch(torch::Tensor data, Trusted) : data_(std::move(data)) {}
  friend ImageBatch trusted_batch(torch::Tensor data);

  torch::Tensor data_;
};

// Skips validation. Only for producers that establish the invariant by
// construction (clamping, selecting rows of an existing batch).
ImageBatch trusted_batch(torch::Tensor data);

// Integer class labels, int64, one per image.
class LabelBatch {
 public:
  explicit LabelBatch(torch::Tensor labels);
  LabelBatch(std::initializer_list<std::int64_t> labels);

  const torch::Tensor& tensor() const { return labels_; }
  std::int64_t size() const { return labels_.size(0); }
  std::int64_t operator[](std::int64_t i) const { return labels_[i].item<std::int64_t>(); }

  LabelBatch slice(std::int64_t begin, std::int64_t end) const;
  LabelBatch select(const torch::Tensor& indices) const;

  // Throws ConfigError unless every label lies in [0, num_classes).
  void check_range(std::int64_t num_classes) const;
  // Throws ShapeError unless this batch pairs with `images`.
  void check_pairs_with(const ImageBatch& images) const;

 private:
  torch::Tensor labels_;
};

enum class Norm { Linf, L2 };

std::string_view to_string(Norm norm);
Norm parse_norm(std::string_view text);

struct PerturbationBudget {
  Norm norm = Norm::Linf;
  double epsilon = 16.0 / 255.0;

  void validate() const;
};

}  // namespace advpurify
