#pragma once

#include "advpurify/attacks/attack_config.hpp"
#include "advpurify/core/classifier.hpp"
#include "advpurify/datasets/image_datasets.hpp"
#include "advpurify/datasets/manifest.hpp"

#include <filesystem>
#include <vector>

namespace advpurify::datasets {

// CrossProduct attacks every image with every attack. Partition assigns
// image k (in id order) to attack k mod |attacks|.
enum class CompositionMode { CrossProduct, Partition };

std::string_view to_string(CompositionMode mode);
CompositionMode parse_composition_mode(std::string_view text);

// Records and tensor rows ordered by (image id, attack kind). Failed attacks
// are kept: their outputs are still perturbed inputs.
struct AdversarialDataset {
  DatasetManifest manifest;
  torch::Tensor adversarial;  // (M, C, H, W), may have M = 0 after filtering
  torch::Tensor clean;
  torch::Tensor labels;  // (M) int64

  std::int64_t size() const { return static_cast<std::int64_t>(manifest.records.size()); }
  // Throw DataError on an empty dataset.
  ImageBatch adversarial_batch() const;
  ImageBatch clean_batch() const;
  LabelBatch label_batch() const;

  AdversarialDataset filter(attacks::AttackKind kind) const;
  std::vector<std::string> attack_names() const;
  // Recomputes the fingerprint after provenance edits.
  void refresh_fingerprint();

  // A JSONL manifest plus a tensor container holding the adversarial, clean
  // and label arrays.
  void save(const std::filesystem::path& manifest_file, const std::filesystem::path& tensor_file) const;
  // Verifies the stored fingerprint against the reloaded content.
  static AdversarialDataset load(const std::filesystem::path& manifest_file,
                                 const std::filesystem::path& tensor_file);
};

// Each attack's seed is derived from `seed` and its kind, so adding an attack
// never changes another attack's outputs.
AdversarialDataset build_adversarial_dataset(const LabeledImages& clean, const Classifier& classifier,
                                             const std::vector<attacks::AttackConfig>& attack_list,
                                             CompositionMode mode, std::uint64_t seed);

}  // namespace advpurify::datasets
