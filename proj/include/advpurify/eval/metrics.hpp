#pragma once

#include "advpurify/core/classifier.hpp"
#include "advpurify/core/types.hpp"

#include <limits>
#include <optional>
#include <vector>

namespace advpurify::eval {

inline constexpr double kPsnrInf = std::numeric_limits<double>::infinity();

// 100 * fraction of argmax predictions equal to the labels.
double accuracy(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y);

// 10 log10(1 / MSE) per image with MAX = 1; kPsnrInf for identical images.
std::vector<double> psnr_per_image(const ImageBatch& a, const ImageBatch& b);

struct PsnrSummary {
  double mean_db = kPsnrInf;  // over finite images; kPsnrInf when none are finite
  std::int64_t excluded = 0;  // identical pairs left out of the mean
  std::int64_t images = 0;
};

PsnrSummary psnr(const ImageBatch& a, const ImageBatch& b);

// Mean absolute element difference.
double mae(const ImageBatch& a, const ImageBatch& b);

// 1 - acc_on_b / acc_on_a; absent when acc_on_a is not positive.
std::optional<double> generalizability(double acc_on_b, double acc_on_a);

}  // namespace advpurify::eval
