#pragma once

#include "advpurify/core/classifier.hpp"
#include "advpurify/core/types.hpp"

#include <cstdint>

namespace advpurify {

// Clamps every element into [0, 1]. Throws CorruptTensorError on NaN/Inf.
ImageBatch clip_to_box(const torch::Tensor& x);

// Projects x_adv onto the L-inf ball of radius epsilon around x_orig,
// intersected with the [0, 1] box. Idempotent.
ImageBatch project_linf(const torch::Tensor& x_adv, const ImageBatch& x_orig, double epsilon);

struct GradientCheckOptions {
  std::int64_t probes = 100;
  double step = 1e-4;
  // Added to |analytic| in the relative-error denominator.
  double floor = 1e-6;
  std::uint64_t seed = 0;
};

// Compares classifier.input_gradient against central finite differences of
// classifier.loss at randomly chosen pixels and returns the largest relative
// error. Both gradients are taken on the float64 copy when available.
double gradient_check(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y,
                      const GradientCheckOptions& options = {});

}  // namespace advpurify
