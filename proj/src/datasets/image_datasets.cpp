#include "advpurify/datasets/image_datasets.hpp"

#include "advpurify/core/errors.hpp"

#include <fmt/format.h>
#include <zlib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>

namespace advpurify::datasets {

namespace fs = std::filesystem;

std::string_view to_string(Split split) {
  return split == Split::Train ? "train" : "test";
}

LabeledImages LabeledImages::select(const std::vector<std::int64_t>& rows) const {
  const auto idx = torch::tensor(rows, torch::kLong);
  std::vector<std::int64_t> sub_ids;
  sub_ids.reserve(rows.size());
  for (auto r : rows) sub_ids.push_back(ids.at(static_cast<std::size_t>(r)));
  return LabeledImages{name, split, images.select(idx), labels.select(idx), std::move(sub_ids), num_classes};
}

fs::path data_root() {
  if (const char* env = std::getenv("ADVPURIFY_DATA_ROOT"); env != nullptr && *env != '\0') return fs::path(env);
  return fs::path("data");
}

namespace {

// Reads a file, inflating it when it carries a gzip header.
std::string read_maybe_gz(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::string out;
  char buf[1 << 16];
  int got = 0;
  while ((got = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(got));
  const bool failed = got < 0;
  gzclose(f);
  if (failed) throw DataError(fmt::format("'{}' is not a readable (gzip) file", path.string()));
  return out;
}

std::uint32_t be32(const std::string& bytes, std::size_t offset) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

fs::path first_existing(const fs::path& dir, const std::string& stem) {
  for (const auto& candidate : {dir / stem, dir / (stem + ".gz")}) {
    if (fs::exists(candidate)) return candidate;
  }
  return {};
}

std::string fetch_hint(std::string_view name, const fs::path& dir) {
  if (name == "mnist") {
    return fmt::format("run `python3 tools/fetch_mnist_subset.py --out {}` or copy the MNIST IDX files there",
                       dir.string());
  }
  if (name == "cifar10") return fmt::format("extract cifar-10-binary.tar.gz so that {} holds the *.bin batches", dir.string());
  return fmt::format("place the {} IDX files (train-*/t10k-*, optionally .gz) in {}", name, dir.string());
}

}  // namespace

LabeledImages read_idx_pair(const fs::path& images_path, const fs::path& labels_path, std::string name, Split split) {
  const auto img = read_maybe_gz(images_path);
  const auto lab = read_maybe_gz(labels_path);
  if (img.size() < 16 || be32(img, 0) != 0x00000803) {
    throw FormatError(fmt::format("'{}' is not an IDX3 image file", images_path.string()));
  }
  if (lab.size() < 8 || be32(lab, 0) != 0x00000801) {
    throw FormatError(fmt::format("'{}' is not an IDX1 label file", labels_path.string()));
  }
  const std::int64_t n = be32(img, 4);
  const std::int64_t h = be32(img, 8);
  const std::int64_t w = be32(img, 12);
  if (static_cast<std::int64_t>(be32(lab, 4)) != n) throw FormatError("IDX image and label counts differ");
  if (static_cast<std::int64_t>(img.size()) != 16 + n * h * w || static_cast<std::int64_t>(lab.size()) != 8 + n) {
    throw FormatError("IDX payload size does not match its header");
  }
  if (n == 0) throw DataError(fmt::format("'{}' holds no images", images_path.string()));
  auto pixels = torch::from_blob(const_cast<char*>(img.data() + 16), {n, 1, h, w}, torch::kUInt8)
                    .to(torch::kFloat32)
                    .div_(255.0f);
  auto labels = torch::from_blob(const_cast<char*>(lab.data() + 8), {n}, torch::kUInt8).to(torch::kLong);
  std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
  LabeledImages out{std::move(name), split, ImageBatch(pixels.contiguous()), LabelBatch(labels), std::move(ids), 10};
  out.labels.check_range(10);
  return out;
}

LabeledImages read_cifar_batches(const std::vector<fs::path>& files, Split split) {
  constexpr std::int64_t kRow = 1 + 3 * 32 * 32;
  std::vector<torch::Tensor> pixel_parts;
  std::vector<torch::Tensor> label_parts;
  for (const auto& file : files) {
    const auto bytes = read_maybe_gz(file);
    if (bytes.empty() || bytes.size() % kRow != 0) {
      throw FormatError(fmt::format("'{}' is not a CIFAR-10 binary batch", file.string()));
    }
    const auto n = static_cast<std::int64_t>(bytes.size()) / kRow;
    auto rows = torch::from_blob(const_cast<char*>(bytes.data()), {n, kRow}, torch::kUInt8).clone();
    label_parts.push_back(rows.select(1, 0).to(torch::kLong));
    pixel_parts.push_back(rows.slice(1, 1).reshape({n, 3, 32, 32}).to(torch::kFloat32).div_(255.0f));
  }
  auto pixels = torch::cat(pixel_parts, 0).contiguous();
  const auto n = pixels.size(0);
  std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
  LabeledImages out{"cifar10", split, ImageBatch(pixels), LabelBatch(torch::cat(label_parts, 0)), std::move(ids), 10};
  out.labels.check_range(10);
  return out;
}

LabeledImages load_dataset(std::string_view name, Split split, std::optional<fs::path> root) {
  const auto base = root.value_or(data_root());
  if (name == "mnist" || name == "fashion-mnist") {
    const auto dir = base / std::string(name);
    const std::string prefix = split == Split::Train ? "train" : "t10k";
    const auto images = first_existing(dir, prefix + "-images-idx3-ubyte");
    const auto labels = first_existing(dir, prefix + "-labels-idx1-ubyte");
    if (images.empty() || labels.empty()) {
      throw DataError(fmt::format("{} {} split not found in {}: {}", name, to_string(split), dir.string(),
                                  fetch_hint(name, dir)));
    }
    return read_idx_pair(images, labels, std::string(name), split);
  }
  if (name == "cifar10") {
    const auto dir = base / "cifar-10-batches-bin";
    std::vector<fs::path> files;
    if (split == Split::Train) {
      for (int i = 1; i <= 5; ++i) files.push_back(dir / fmt::format("data_batch_{}.bin", i));
    } else {
      files.push_back(dir / "test_batch.bin");
    }
    for (const auto& f : files) {
      if (!fs::exists(f)) throw DataError(fmt::format("missing '{}': {}", f.string(), fetch_hint(name, dir)));
    }
    return read_cifar_batches(files, split);
  }
  throw ConfigError(fmt::format("unknown dataset '{}' (expected mnist, fashion-mnist or cifar10)", name));
}

LabeledImages seeded_subset(const LabeledImages& data, std::int64_t size, std::uint64_t seed) {
  if (size <= 0) return data;
  if (size > data.size()) {
    throw ConfigError(fmt::format("subset of {} requested from a split of {} images", size, data.size()));
  }
  std::vector<std::int64_t> rows(static_cast<std::size_t>(data.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<std::int64_t>(i);
  std::mt19937_64 rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(static_cast<std::size_t>(size));
  std::sort(rows.begin(), rows.end());
  return data.select(rows);
}

}  // namespace advpurify::datasets
