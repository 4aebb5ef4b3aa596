#include "advpurify/datasets/manifest.hpp"

#include "advpurify/attacks/attack_config.hpp"
#include "advpurify/core/errors.hpp"
#include "advpurify/datasets/tensor_io.hpp"

#include <fmt/format.h>

#include <sstream>

namespace advpurify::datasets {

nlohmann::json ManifestRecord::to_json() const {
  return {{"image_id", image_id}, {"tensor_offset", tensor_offset}, {"label", label},
          {"attack", attack},     {"model_id", model_id},           {"epsilon", epsilon},
          {"norm", norm},         {"success", success},             {"iterations", iterations}};
}

ManifestRecord ManifestRecord::from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.image_id = j.at("image_id").get<std::int64_t>();
  r.tensor_offset = j.at("tensor_offset").get<std::int64_t>();
  r.label = j.at("label").get<std::int64_t>();
  r.attack = j.at("attack").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.epsilon = j.at("epsilon").get<double>();
  r.norm = j.at("norm").get<std::string>();
  r.success = j.at("success").get<bool>();
  r.iterations = j.at("iterations").get<std::int64_t>();
  return r;
}

void DatasetManifest::validate() const {
  for (const auto& r : records) {
    if (r.attack != kCleanTag) (void)attacks::parse_attack_kind(r.attack);
  }
}

namespace {

nlohmann::json header_json(const DatasetManifest& m) {
  return {{"name", m.name}, {"split", to_string(m.split)}, {"count", m.records.size()}, {"provenance", m.provenance}};
}

}  // namespace

std::string DatasetManifest::compute_fingerprint(std::string_view tensor_bytes) const {
  std::string canonical = header_json(*this).dump();
  for (const auto& r : records) canonical += '\n' + r.to_json().dump();
  canonical += '\n';
  canonical += sha256_hex(tensor_bytes);
  return sha256_hex(canonical);
}

std::string DatasetManifest::to_jsonl() const {
  auto header = header_json(*this);
  header["fingerprint"] = fingerprint;
  std::string out = header.dump() + '\n';
  for (const auto& r : records) out += r.to_json().dump() + '\n';
  return out;
}

DatasetManifest DatasetManifest::from_jsonl(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty manifest");
  DatasetManifest m;
  try {
    const auto header = nlohmann::json::parse(line);
    m.name = header.at("name").get<std::string>();
    m.split = header.at("split").get<std::string>() == "train" ? Split::Train : Split::Test;
    m.provenance = header.value("provenance", nlohmann::json::object());
    m.fingerprint = header.value("fingerprint", "");
    const auto count = header.at("count").get<std::size_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      m.records.push_back(ManifestRecord::from_json(nlohmann::json::parse(line)));
    }
    if (m.records.size() != count) {
      throw FormatError(fmt::format("manifest header declares {} records but holds {}", count, m.records.size()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("malformed manifest: {}", e.what()));
  }
  m.validate();
  return m;
}

}  // namespace advpurify::datasets
