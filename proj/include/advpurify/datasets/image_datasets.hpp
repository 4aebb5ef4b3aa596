#pragma once

#include "advpurify/core/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace advpurify::datasets {

enum class Split { Train, Test };

std::string_view to_string(Split split);

// Images with labels and stable ids (the row index in the source split).
struct LabeledImages {
  std::string name;
  Split split = Split::Train;
  ImageBatch images;
  LabelBatch labels;
  std::vector<std::int64_t> ids;
  std::int64_t num_classes = 10;

  std::int64_t size() const { return images.size(); }
  LabeledImages select(const std::vector<std::int64_t>& rows) const;
};

// $ADVPURIFY_DATA_ROOT when set, otherwise ./data.
std::filesystem::path data_root();

// "mnist", "fashion-mnist" (IDX files, optionally gzip'd) or "cifar10"
// (binary batches). Throws DataError naming the expected files when they
// are missing.
LabeledImages load_dataset(std::string_view name, Split split, std::optional<std::filesystem::path> root = {});

// Reads an IDX image file and label file pair.
LabeledImages read_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                            std::string name, Split split);

// Reads CIFAR-10 binary batches (1 label byte + 3072 pixel bytes per row).
LabeledImages read_cifar_batches(const std::vector<std::filesystem::path>& files, Split split);

// The first `size` rows of a seeded permutation. size larger than the split
// is an error; size <= 0 returns the whole split unchanged.
LabeledImages seeded_subset(const LabeledImages& data, std::int64_t size, std::uint64_t seed);

}  // namespace advpurify::datasets
