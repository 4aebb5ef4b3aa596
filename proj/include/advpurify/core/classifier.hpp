#pragma once

#include "advpurify/core/types.hpp"

#include <torch/torch.h>

#include <memory>
#include <string>

namespace advpurify {

// A differentiable image classifier. Implementations supply a forward pass
// built from torch operations; loss and input gradients are derived from it
// through autograd, so any implementation satisfying `forward` gets them.
//
// All methods are const and do not mutate shared state: a frozen classifier
// may be queried concurrently.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string id() const = 0;
  virtual std::int64_t num_classes() const = 0;
  virtual ImageShape input_shape() const = 0;

  // Raw logits (N, num_classes) for an (N, C, H, W) tensor. Must be
  // differentiable with respect to `x` and must not require x to lie in the
  // image box (attacks probe intermediate points).
  virtual torch::Tensor forward(const torch::Tensor& x) const = 0;

  // A copy evaluated in float64, used as the finite-difference reference by
  // gradient_check. Returning nullptr makes the check use this classifier.
  virtual std::unique_ptr<Classifier> to_double() const { return nullptr; }

  torch::Tensor logits(const ImageBatch& x) const;
  torch::Tensor predict(const ImageBatch& x) const;

  // Per-sample softmax cross-entropy (natural log), shape (N).
  torch::Tensor loss(const ImageBatch& x, const LabelBatch& y) const;
  // d loss_i / d x_i for every sample, same shape as x.
  torch::Tensor input_gradient(const ImageBatch& x, const LabelBatch& y) const;

  // Unchecked variants over raw tensors for attack inner loops.
  torch::Tensor loss(const torch::Tensor& x, const torch::Tensor& y) const;
  torch::Tensor input_gradient(const torch::Tensor& x, const torch::Tensor& y) const;
  torch::Tensor predict(const torch::Tensor& x) const;

 protected:
  void check_input(const ImageBatch& x) const;
};

// logits = flatten(x) * W^T + b. Used as the closed-form oracle model in
// attack tests.
class LinearClassifier final : public Classifier {
 public:
  LinearClassifier(torch::Tensor weight, torch::Tensor bias, ImageShape shape, std::string id = "linear");

  std::string id() const override { return id_; }
  std::int64_t num_classes() const override { return weight_.size(0); }
  ImageShape input_shape() const override { return shape_; }
  torch::Tensor forward(const torch::Tensor& x) const override;
  std::unique_ptr<Classifier> to_double() const override;

  const torch::Tensor& weight() const { return weight_; }
  const torch::Tensor& bias() const { return bias_; }

 private:
  torch::Tensor weight_;
  torch::Tensor bias_;
  ImageShape shape_;
  std::string id_;
};

}  // namespace advpurify
