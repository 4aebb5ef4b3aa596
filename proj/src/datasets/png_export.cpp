#include "advpurify/datasets/png_export.hpp"

#include "advpurify/core/errors.hpp"

#include <fmt/format.h>
#include <png.h>
#include "advpurify/core/log.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

namespace advpurify::datasets {

namespace fs = std::filesystem;

std::uint8_t quantize_pixel(float v) {
  return static_cast<std::uint8_t>(std::floor(255.0f * v + 0.5f));
}

torch::Tensor quantize_bytes(const torch::Tensor& images) {
  return torch::floor(images * 255.0f + 0.5f).clamp(0, 255).to(torch::kUInt8);
}

torch::Tensor dequantize_bytes(const torch::Tensor& bytes) {
  return bytes.to(torch::kFloat32).div(255.0f);
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const fs::path& path, const torch::Tensor& hwc) {
  const auto h = static_cast<png_uint_32>(hwc.size(0));
  const auto w = static_cast<png_uint_32>(hwc.size(1));
  const auto c = hwc.size(2);
  File f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw DataError(fmt::format("cannot write '{}'", path.string()));
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError(fmt::format("libpng failed writing '{}'", path.string()));
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, w, h, 8, c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto* data = hwc.data_ptr<std::uint8_t>();
  for (png_uint_32 y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(y) * w * static_cast<std::size_t>(c)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

torch::Tensor read_png(const fs::path& path) {
  File f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw DataError(fmt::format("cannot read '{}'", path.string()));
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  torch::Tensor out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(fmt::format("'{}' is not a readable PNG", path.string()));
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const auto w = png_get_image_width(png, info);
  const auto h = png_get_image_height(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) != 8 || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(fmt::format("'{}' is not an 8-bit gray or RGB PNG", path.string()));
  }
  const std::int64_t c = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  out = torch::empty({static_cast<std::int64_t>(h), static_cast<std::int64_t>(w), c}, torch::kUInt8);
  auto* data = out.data_ptr<std::uint8_t>();
  for (png_uint_32 y = 0; y < h; ++y) png_read_row(png, data + static_cast<std::size_t>(y) * w * c, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

std::vector<fs::path> export_png(const ImageBatch& batch, const fs::path& dir, const std::string& prefix) {
  log::warn("exporting {} images as 8-bit PNG: quantization can change whether an adversarial example still "
               "fools the classifier; evaluations on these files are tagged '{}'",
               batch.size(), kQuantizedPathTag);
  fs::create_directories(dir);
  const auto bytes = quantize_bytes(batch.tensor()).permute({0, 2, 3, 1}).contiguous();
  std::vector<fs::path> files;
  for (std::int64_t i = 0; i < batch.size(); ++i) {
    auto path = dir / fmt::format("{}_{:05d}.png", prefix, i);
    write_png(path, bytes[i]);
    files.push_back(std::move(path));
  }
  return files;
}

ImageBatch import_png(const std::vector<fs::path>& files) {
  if (files.empty()) throw DataError("no PNG files to import");
  std::vector<torch::Tensor> images;
  for (const auto& f : files) images.push_back(read_png(f).permute({2, 0, 1}));
  return ImageBatch(dequantize_bytes(torch::stack(images, 0)).contiguous());
}

ImageBatch png_roundtrip(const ImageBatch& batch, const fs::path& scratch_dir) {
  return import_png(export_png(batch, scratch_dir, "roundtrip"));
}

}  // namespace advpurify::datasets
