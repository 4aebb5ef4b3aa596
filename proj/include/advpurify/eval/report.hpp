#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace advpurify::eval {

inline constexpr const char* kNoDefense = "NONE";

struct ReportRow {
  std::string dataset;
  std::string attack;  // CLEAN or an attack kind name
  double epsilon = 0.0;
  std::string model_id;
  std::string defense_id = kNoDefense;
  double accuracy = 0.0;  // percent
  double psnr = 0.0;      // dB, or kPsnrInf
  std::int64_t psnr_excluded = 0;
  double mae = 0.0;
  std::int64_t n_images = 0;
  // Protocol-specific keys (iterations, source model, arm, ...).
  nlohmann::json extra = nlohmann::json::object();

  // Throws ConfigError when accuracy/mae/psnr leave their valid ranges.
  void validate() const;
  nlohmann::json to_json() const;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::vector<std::string> manifests;     // dataset fingerprints
  std::vector<std::string> checkpoints;   // checkpoint fingerprints
  bool tensor_path = true;                // false once any PNG round-trip happened
  std::vector<std::string> tags;

  nlohmann::json to_json() const;
};

struct EvaluationReport {
  std::string title;
  std::vector<ReportRow> rows;
  Provenance provenance;

  // Marks the report as computed through 8-bit files.
  void mark_quantized();

  // Header line with the title and provenance, then one line per row.
  std::string to_jsonl() const;
  std::string to_csv() const;
  // Writes <dir>/<stem>.jsonl and <dir>/<stem>.csv.
  void save(const std::filesystem::path& dir, const std::string& stem) const;

  const ReportRow* find(const std::string& attack, const std::string& defense_id) const;
};

// "INF" for the PSNR sentinel, the shortest round-trip decimal otherwise.
std::string format_number(double v);

}  // namespace advpurify::eval
