#include "advpurify/core/types.hpp"

#include "advpurify/core/errors.hpp"

#include <fmt/format.h>

namespace advpurify {

std::string ImageShape::to_string() const {
  return fmt::format("({}, {}, {})", channels, height, width);
}

ImageBatch::ImageBatch(torch::Tensor data) {
  if (!data.defined() || data.dim() != 4) {
    throw ShapeError("image batch must be a 4-D (N, C, H, W) tensor");
  }
  if (data.size(0) < 1) throw ShapeError("image batch must contain at least one image");
  if (data.size(1) != 1 && data.size(1) != 3) {
    throw ShapeError(fmt::format("image batch must have 1 or 3 channels, got {}", data.size(1)));
  }
  if (data.size(2) < 1 || data.size(3) < 1) throw ShapeError("image height and width must be positive");
  if (data.scalar_type() != torch::kFloat32) {
    throw ShapeError("image batch must be float32");
  }
  data = data.detach().contiguous();
  if (!torch::isfinite(data).all().item<bool>()) {
    throw CorruptTensorError("image batch contains non-finite values");
  }
  if (data.min().item<float>() < 0.0F || data.max().item<float>() > 1.0F) {
    throw CorruptTensorError("image batch values must lie in [0, 1]");
  }
  data_ = std::move(data);
}

ImageBatch trusted_batch(torch::Tensor data) {
  return ImageBatch(data.detach().contiguous(), ImageBatch::Trusted{});
}

ImageShape ImageBatch::shape() const {
  return {data_.size(1), data_.size(2), data_.size(3)};
}

ImageBatch ImageBatch::slice(std::int64_t begin, std::int64_t end) const {
  if (begin < 0 || end > size() || begin >= end) {
    throw ShapeError(fmt::format("slice [{}, {}) out of range for batch of {}", begin, end, size()));
  }
  return trusted_batch(data_.slice(0, begin, end));
}

ImageBatch ImageBatch::select(const torch::Tensor& indices) const {
  if (indices.numel() == 0) throw ShapeError("cannot select an empty image batch");
  return trusted_batch(data_.index_select(0, indices.to(torch::kLong)));
}

ImageBatch ImageBatch::concat(const std::vector<ImageBatch>& parts) {
  if (parts.empty()) throw ShapeError("cannot concatenate zero image batches");
  std::vector<torch::Tensor> tensors;
  tensors.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts.front().shape()) throw ShapeError("image shapes differ in concat");
    tensors.push_back(p.tensor());
  }
  return trusted_batch(torch::cat(tensors, 0));
}

LabelBatch::LabelBatch(torch::Tensor labels) {
  if (!labels.defined() || labels.dim() != 1) throw ShapeError("labels must be a 1-D tensor");
  if (labels.is_floating_point()) throw ShapeError("labels must be integers");
  labels_ = labels.to(torch::kLong).contiguous();
}

LabelBatch::LabelBatch(std::initializer_list<std::int64_t> labels)
    : LabelBatch(torch::tensor(std::vector<std::int64_t>(labels), torch::kLong)) {}

LabelBatch LabelBatch::slice(std::int64_t begin, std::int64_t end) const {
  return LabelBatch(labels_.slice(0, begin, end));
}

LabelBatch LabelBatch::select(const torch::Tensor& indices) const {
  return LabelBatch(labels_.index_select(0, indices.to(torch::kLong)));
}

void LabelBatch::check_range(std::int64_t num_classes) const {
  if (size() == 0) return;
  if (labels_.min().item<std::int64_t>() < 0 || labels_.max().item<std::int64_t>() >= num_classes) {
    throw ConfigError(fmt::format("labels must lie in [0, {})", num_classes));
  }
}

void LabelBatch::check_pairs_with(const ImageBatch& images) const {
  if (size() != images.size()) {
    throw ShapeError(fmt::format("{} labels for {} images", size(), images.size()));
  }
}

std::string_view to_string(Norm norm) {
  return norm == Norm::Linf ? "Linf" : "L2";
}

Norm parse_norm(std::string_view text) {
  if (text == "Linf" || text == "linf" || text == "inf") return Norm::Linf;
  if (text == "L2" || text == "l2") return Norm::L2;
  throw ConfigError(fmt::format("unknown norm '{}' (expected Linf or L2)", text));
}

void PerturbationBudget::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
}

}  // namespace advpurify
