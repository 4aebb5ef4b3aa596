#include "advpurify/eval/metrics.hpp"

#include "advpurify/core/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace advpurify::eval {

namespace {

void check_pair(const ImageBatch& a, const ImageBatch& b) {
  if (a.tensor().sizes() != b.tensor().sizes()) {
    throw ShapeError(fmt::format("image batches differ in shape: {} x {} vs {} x {}", a.size(), a.shape().to_string(),
                                 b.size(), b.shape().to_string()));
  }
}

}  // namespace

double accuracy(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y) {
  y.check_pairs_with(x);
  if (x.size() == 0) throw DataError("accuracy of an empty batch is undefined");
  constexpr std::int64_t kChunk = 500;
  std::int64_t correct = 0;
  for (std::int64_t start = 0; start < x.size(); start += kChunk) {
    const auto end = std::min(x.size(), start + kChunk);
    const auto pred = classifier.predict(x.slice(start, end));
    correct += pred.eq(y.tensor().slice(0, start, end)).sum().item<std::int64_t>();
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(x.size());
}

std::vector<double> psnr_per_image(const ImageBatch& a, const ImageBatch& b) {
  check_pair(a, b);
  const auto diff = (a.tensor().to(torch::kFloat64) - b.tensor().to(torch::kFloat64)).flatten(1);
  const auto mse = diff.pow(2).mean(1).contiguous();
  std::vector<double> out(static_cast<std::size_t>(a.size()));
  const auto* m = mse.data_ptr<double>();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m[i] == 0.0 ? kPsnrInf : 10.0 * std::log10(1.0 / m[i]);
  return out;
}

PsnrSummary psnr(const ImageBatch& a, const ImageBatch& b) {
  const auto per_image = psnr_per_image(a, b);
  PsnrSummary s;
  s.images = static_cast<std::int64_t>(per_image.size());
  double total = 0.0;
  std::int64_t finite = 0;
  for (auto v : per_image) {
    if (std::isinf(v)) {
      ++s.excluded;
    } else {
      total += v;
      ++finite;
    }
  }
  if (finite > 0) s.mean_db = total / static_cast<double>(finite);
  return s;
}

double mae(const ImageBatch& a, const ImageBatch& b) {
  check_pair(a, b);
  return (a.tensor().to(torch::kFloat64) - b.tensor().to(torch::kFloat64)).abs().mean().item<double>();
}

std::optional<double> generalizability(double acc_on_b, double acc_on_a) {
  if (!(acc_on_a > 0.0)) return std::nullopt;
  return 1.0 - acc_on_b / acc_on_a;
}

}  // namespace advpurify::eval
