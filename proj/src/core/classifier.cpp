#include "advpurify/core/classifier.hpp"

#include "advpurify/core/errors.hpp"

#include <fmt/format.h>

namespace advpurify {

void Classifier::check_input(const ImageBatch& x) const {
  if (x.shape() != input_shape()) {
    throw ShapeError(fmt::format("classifier '{}' expects images of shape {}, got {}", id(),
                                 input_shape().to_string(), x.shape().to_string()));
  }
}

torch::Tensor Classifier::logits(const ImageBatch& x) const {
  check_input(x);
  torch::NoGradGuard no_grad;
  return forward(x.tensor());
}

torch::Tensor Classifier::predict(const ImageBatch& x) const {
  return logits(x).argmax(1);
}

torch::Tensor Classifier::predict(const torch::Tensor& x) const {
  torch::NoGradGuard no_grad;
  return forward(x).argmax(1);
}

torch::Tensor Classifier::loss(const ImageBatch& x, const LabelBatch& y) const {
  check_input(x);
  y.check_pairs_with(x);
  y.check_range(num_classes());
  torch::NoGradGuard no_grad;
  return loss(x.tensor(), y.tensor());
}

torch::Tensor Classifier::loss(const torch::Tensor& x, const torch::Tensor& y) const {
  return torch::nn::functional::cross_entropy(
      forward(x), y, torch::nn::functional::CrossEntropyFuncOptions().reduction(torch::kNone));
}

torch::Tensor Classifier::input_gradient(const ImageBatch& x, const LabelBatch& y) const {
  check_input(x);
  y.check_pairs_with(x);
  y.check_range(num_classes());
  return input_gradient(x.tensor(), y.tensor());
}

torch::Tensor Classifier::input_gradient(const torch::Tensor& x, const torch::Tensor& y) const {
  torch::AutoGradMode enable(true);
  auto probe = x.detach().clone().requires_grad_(true);
  // Samples are independent, so the gradient of the summed loss gives every
  // per-sample gradient in one backward pass.
  auto total = loss(probe, y).sum();
  return torch::autograd::grad({total}, {probe})[0].detach();
}

LinearClassifier::LinearClassifier(torch::Tensor weight, torch::Tensor bias, ImageShape shape, std::string id)
    : weight_(std::move(weight)), bias_(std::move(bias)), shape_(shape), id_(std::move(id)) {
  if (weight_.dim() != 2 || weight_.size(1) != shape_.numel()) {
    throw ShapeError("linear classifier weight must be (num_classes, C*H*W)");
  }
  if (bias_.dim() != 1 || bias_.size(0) != weight_.size(0)) {
    throw ShapeError("linear classifier bias must have num_classes entries");
  }
  if (weight_.size(0) < 2) throw ShapeError("a classifier needs at least two classes");
}

torch::Tensor LinearClassifier::forward(const torch::Tensor& x) const {
  return torch::addmm(bias_, x.flatten(1), weight_.t());
}

std::unique_ptr<Classifier> LinearClassifier::to_double() const {
  return std::make_unique<LinearClassifier>(weight_.to(torch::kFloat64), bias_.to(torch::kFloat64), shape_, id_);
}

}  // namespace advpurify
