#pragma once

#include "advpurify/core/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace advpurify::datasets {

// Reports computed on images that went through 8-bit files carry this tag.
inline constexpr const char* kQuantizedPathTag = "quantized path";

// byte = floor(255 * v + 0.5)
std::uint8_t quantize_pixel(float v);
torch::Tensor quantize_bytes(const torch::Tensor& images);  // uint8, same shape
torch::Tensor dequantize_bytes(const torch::Tensor& bytes);  // float32 in [0, 1]

// Writes <dir>/<prefix>_<k>.png per image (grayscale or RGB) and logs a
// warning that 8-bit quantization can change attack efficacy. Not used by
// any evaluation unless explicitly requested.
std::vector<std::filesystem::path> export_png(const ImageBatch& batch, const std::filesystem::path& dir,
                                              const std::string& prefix = "img");
ImageBatch import_png(const std::vector<std::filesystem::path>& files);

// float -> byte -> float through the exported files.
ImageBatch png_roundtrip(const ImageBatch& batch, const std::filesystem::path& scratch_dir);

}  // namespace advpurify::datasets
