#pragma once

#include "advpurify/datasets/image_datasets.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace advpurify::datasets {

inline constexpr const char* kCleanTag = "CLEAN";

struct ManifestRecord {
  std::int64_t image_id = 0;
  std::int64_t tensor_offset = 0;  // row in the companion tensor container
  std::int64_t label = 0;
  std::string attack = kCleanTag;  // CLEAN or an attack kind name
  std::string model_id;
  double epsilon = 0.0;
  std::string norm = "Linf";
  bool success = false;
  std::int64_t iterations = 0;

  nlohmann::json to_json() const;
  static ManifestRecord from_json(const nlohmann::json& j);
};

struct DatasetManifest {
  std::string name;
  Split split = Split::Train;
  std::vector<ManifestRecord> records;
  // Free-form provenance (attack configs, classifier fingerprint, seed).
  nlohmann::json provenance = nlohmann::json::object();
  std::string fingerprint;

  // Throws ConfigError when a record names an unknown attack kind.
  void validate() const;
  // SHA-256 over the canonical header, every record and the tensor bytes.
  std::string compute_fingerprint(std::string_view tensor_bytes) const;

  // JSONL: a header object followed by one object per record.
  std::string to_jsonl() const;
  static DatasetManifest from_jsonl(std::string_view text);
};

}  // namespace advpurify::datasets
