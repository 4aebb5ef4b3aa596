#include "advpurify/datasets/adversarial_dataset.hpp"

#include "advpurify/attacks/attacks.hpp"
#include "advpurify/core/errors.hpp"
#include "advpurify/datasets/tensor_io.hpp"

#include <fmt/format.h>
#include "advpurify/core/log.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace advpurify::datasets {

using attacks::AttackConfig;
using attacks::AttackKind;

std::string_view to_string(CompositionMode mode) {
  return mode == CompositionMode::CrossProduct ? "cross-product" : "partition";
}

CompositionMode parse_composition_mode(std::string_view text) {
  if (text == "cross-product" || text == "cross") return CompositionMode::CrossProduct;
  if (text == "partition") return CompositionMode::Partition;
  throw ConfigError(fmt::format("unknown composition mode '{}' (expected cross-product or partition)", text));
}

namespace {

void require_rows(const AdversarialDataset& d) {
  if (d.size() == 0) throw DataError("the adversarial dataset is empty");
}

std::string tensor_bytes(const AdversarialDataset& d) {
  return encode_tensors({{"adversarial", d.adversarial}, {"clean", d.clean}, {"labels", d.labels}});
}

}  // namespace

ImageBatch AdversarialDataset::adversarial_batch() const {
  require_rows(*this);
  return trusted_batch(adversarial);
}

ImageBatch AdversarialDataset::clean_batch() const {
  require_rows(*this);
  return trusted_batch(clean);
}

LabelBatch AdversarialDataset::label_batch() const {
  require_rows(*this);
  return LabelBatch(labels);
}

AdversarialDataset AdversarialDataset::filter(AttackKind kind) const {
  const std::string name(attacks::to_string(kind));
  std::vector<std::int64_t> rows;
  AdversarialDataset out;
  out.manifest = manifest;
  out.manifest.records.clear();
  for (const auto& r : manifest.records) {
    if (r.attack != name) continue;
    rows.push_back(r.tensor_offset);
    auto copy = r;
    copy.tensor_offset = static_cast<std::int64_t>(out.manifest.records.size());
    out.manifest.records.push_back(copy);
  }
  const auto idx = torch::tensor(rows, torch::kLong);
  out.adversarial = adversarial.index_select(0, idx);
  out.clean = clean.index_select(0, idx);
  out.labels = labels.index_select(0, idx);
  out.manifest.provenance["filtered_to"] = name;
  out.manifest.fingerprint = out.manifest.compute_fingerprint(tensor_bytes(out));
  return out;
}

std::vector<std::string> AdversarialDataset::attack_names() const {
  std::set<std::string> names;
  for (const auto& r : manifest.records) names.insert(r.attack);
  return {names.begin(), names.end()};
}

void AdversarialDataset::refresh_fingerprint() {
  manifest.fingerprint = manifest.compute_fingerprint(tensor_bytes(*this));
}

void AdversarialDataset::save(const std::filesystem::path& manifest_file,
                              const std::filesystem::path& tensor_file) const {
  for (const auto& p : {manifest_file, tensor_file}) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  }
  save_tensors(tensor_file, {{"adversarial", adversarial}, {"clean", clean}, {"labels", labels}});
  write_file_atomic(manifest_file, manifest.to_jsonl());
}

AdversarialDataset AdversarialDataset::load(const std::filesystem::path& manifest_file,
                                            const std::filesystem::path& tensor_file) {
  for (const auto& p : {manifest_file, tensor_file}) {
    if (!std::filesystem::exists(p)) {
      throw MissingArtifactError(
          fmt::format("adversarial dataset file '{}' does not exist (produce it with the attack command)", p.string()));
    }
  }
  AdversarialDataset d;
  d.manifest = DatasetManifest::from_jsonl(read_file(manifest_file));
  const auto tensors = load_tensors(tensor_file);
  d.adversarial = find_tensor(tensors, "adversarial");
  d.clean = find_tensor(tensors, "clean");
  d.labels = find_tensor(tensors, "labels");
  if (d.adversarial.size(0) != d.size() || d.clean.size(0) != d.size() || d.labels.size(0) != d.size()) {
    throw FormatError("manifest and tensor container disagree on the record count");
  }
  if (d.manifest.compute_fingerprint(tensor_bytes(d)) != d.manifest.fingerprint) {
    throw FormatError(fmt::format("fingerprint mismatch between '{}' and '{}'", manifest_file.string(),
                                  tensor_file.string()));
  }
  return d;
}

AdversarialDataset build_adversarial_dataset(const LabeledImages& clean, const Classifier& classifier,
                                             const std::vector<AttackConfig>& attack_list, CompositionMode mode,
                                             std::uint64_t seed) {
  if (attack_list.empty()) throw ConfigError("the attack list is empty");
  if (clean.images.shape() != classifier.input_shape()) {
    throw ShapeError(fmt::format("classifier expects {} images, dataset has {}", classifier.input_shape().to_string(),
                                 clean.images.shape().to_string()));
  }
  std::set<AttackKind> seen;
  for (const auto& cfg : attack_list) {
    cfg.validate();
    if (!seen.insert(cfg.kind).second) {
      throw ConfigError(fmt::format("attack {} listed twice", attacks::to_string(cfg.kind)));
    }
  }

  // Rows of `clean` in image-id order.
  std::vector<std::int64_t> by_id(static_cast<std::size_t>(clean.size()));
  std::iota(by_id.begin(), by_id.end(), 0);
  std::stable_sort(by_id.begin(), by_id.end(), [&](auto a, auto b) {
    return clean.ids[static_cast<std::size_t>(a)] < clean.ids[static_cast<std::size_t>(b)];
  });

  struct Row {
    std::int64_t image_id;
    AttackKind kind;
    std::int64_t source_row;
    torch::Tensor adversarial;
    bool success;
    std::int64_t iterations;
    const AttackConfig* cfg;
  };
  std::vector<Row> rows;

  for (std::size_t a = 0; a < attack_list.size(); ++a) {
    auto cfg = attack_list[a];
    cfg.seed = attacks::image_seed(seed, static_cast<std::int64_t>(cfg.kind));
    std::vector<std::int64_t> members;
    for (std::size_t k = 0; k < by_id.size(); ++k) {
      if (mode == CompositionMode::CrossProduct || k % attack_list.size() == a) members.push_back(by_id[k]);
    }
    if (members.empty()) continue;
    const auto subset = clean.select(members);
    log::info("attacking {} images with {}", members.size(), attacks::to_string(cfg.kind));
    const auto result = attacks::run_attack(classifier, subset.images, subset.labels, cfg, subset.ids);
    for (std::size_t j = 0; j < members.size(); ++j) {
      rows.push_back({subset.ids[j], cfg.kind, members[j], result.adversarial.tensor()[static_cast<std::int64_t>(j)],
                      static_cast<bool>(result.success[j]), result.iterations[j], &attack_list[a]});
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.image_id != b.image_id ? a.image_id < b.image_id : a.kind < b.kind;
  });

  AdversarialDataset out;
  out.manifest.name = clean.name;
  out.manifest.split = clean.split;
  std::vector<torch::Tensor> adv;
  std::vector<std::int64_t> source;
  for (const auto& r : rows) {
    ManifestRecord rec;
    rec.image_id = r.image_id;
    rec.tensor_offset = static_cast<std::int64_t>(out.manifest.records.size());
    rec.label = clean.labels[r.source_row];
    rec.attack = std::string(attacks::to_string(r.kind));
    rec.model_id = classifier.id();
    rec.epsilon = r.cfg->budget.epsilon;
    rec.norm = std::string(to_string(r.cfg->budget.norm));
    rec.success = r.success;
    rec.iterations = r.iterations;
    out.manifest.records.push_back(rec);
    adv.push_back(r.adversarial);
    source.push_back(r.source_row);
  }
  const auto idx = torch::tensor(source, torch::kLong);
  out.adversarial = torch::stack(adv, 0).contiguous();
  out.clean = clean.images.tensor().index_select(0, idx).contiguous();
  out.labels = clean.labels.tensor().index_select(0, idx).contiguous();

  nlohmann::json configs = nlohmann::json::array();
  for (const auto& cfg : attack_list) configs.push_back(cfg.to_json());
  out.manifest.provenance = {{"seed", seed},
                             {"mode", to_string(mode)},
                             {"classifier", classifier.id()},
                             {"attacks", configs},
                             {"source_images", clean.size()}};
  out.manifest.fingerprint = out.manifest.compute_fingerprint(tensor_bytes(out));
  return out;
}

}  // namespace advpurify::datasets
