#include "advpurify/eval/report.hpp"

#include "advpurify/core/errors.hpp"
#include "advpurify/datasets/png_export.hpp"
#include "advpurify/datasets/tensor_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace advpurify::eval {

std::string format_number(double v) {
  if (std::isinf(v) && v > 0) return "INF";
  return fmt::format("{}", v);
}

void ReportRow::validate() const {
  if (!(accuracy >= 0.0 && accuracy <= 100.0)) throw ConfigError(fmt::format("accuracy {} outside [0, 100]", accuracy));
  if (!(mae >= 0.0)) throw ConfigError(fmt::format("mae {} is negative", mae));
  if (!(psnr > 0.0)) throw ConfigError(fmt::format("psnr {} is not positive", psnr));
}

nlohmann::json ReportRow::to_json() const {
  nlohmann::json psnr_value = std::isinf(psnr) ? nlohmann::json("INF") : nlohmann::json(psnr);
  return {{"dataset", dataset},   {"attack", attack},       {"epsilon", epsilon},
          {"model_id", model_id}, {"defense_id", defense_id}, {"accuracy", accuracy},
          {"psnr", psnr_value},   {"psnr_excluded", psnr_excluded}, {"mae", mae},
          {"n_images", n_images}, {"extra", extra}};
}

nlohmann::json Provenance::to_json() const {
  return {{"seed", seed},
          {"manifests", manifests},
          {"checkpoints", checkpoints},
          {"tensor_path", tensor_path},
          {"tags", tags}};
}

void EvaluationReport::mark_quantized() {
  provenance.tensor_path = false;
  if (std::find(provenance.tags.begin(), provenance.tags.end(), datasets::kQuantizedPathTag) ==
      provenance.tags.end()) {
    provenance.tags.emplace_back(datasets::kQuantizedPathTag);
  }
}

std::string EvaluationReport::to_jsonl() const {
  nlohmann::json header = {{"title", title}, {"rows", rows.size()}, {"provenance", provenance.to_json()}};
  std::string out = header.dump() + '\n';
  for (const auto& row : rows) {
    row.validate();
    out += row.to_json().dump() + '\n';
  }
  return out;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + '"';
}

}  // namespace

std::string EvaluationReport::to_csv() const {
  std::string out = "dataset,attack,epsilon,model_id,defense_id,accuracy,psnr,psnr_excluded,mae,n_images,extra\n";
  for (const auto& r : rows) {
    r.validate();
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.dataset), csv_field(r.attack),
                       format_number(r.epsilon), csv_field(r.model_id), csv_field(r.defense_id),
                       format_number(r.accuracy), format_number(r.psnr), r.psnr_excluded, format_number(r.mae),
                       r.n_images, csv_field(r.extra.empty() ? "" : r.extra.dump()));
  }
  return out;
}

void EvaluationReport::save(const std::filesystem::path& dir, const std::string& stem) const {
  std::filesystem::create_directories(dir);
  datasets::write_file_atomic(dir / (stem + ".jsonl"), to_jsonl());
  datasets::write_file_atomic(dir / (stem + ".csv"), to_csv());
}

const ReportRow* EvaluationReport::find(const std::string& attack, const std::string& defense_id) const {
  for (const auto& r : rows) {
    if (r.attack == attack && r.defense_id == defense_id) return &r;
  }
  return nullptr;
}

}  // namespace advpurify::eval
