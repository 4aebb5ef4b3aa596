#include "advpurify/attacks/attacks.hpp"
#include "advpurify/core/errors.hpp"
#include "advpurify/datasets/adversarial_dataset.hpp"
#include "advpurify/datasets/image_datasets.hpp"
#include "advpurify/datasets/manifest.hpp"
#include "advpurify/datasets/png_export.hpp"
#include "advpurify/datasets/tensor_io.hpp"
#include "support.hpp"

#include "doctest_torch.hpp"

#include <fstream>
#include <set>

using namespace advpurify;
using namespace advpurify::datasets;
using advpurify::testing::random_images;
using advpurify::testing::TempDir;

namespace {

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xFF));
}

LabeledImages toy_images(std::int64_t n, ImageShape shape = {1, 6, 6}) {
  std::vector<std::int64_t> ids;
  std::vector<std::int64_t> labels;
  for (std::int64_t i = 0; i < n; ++i) {
    ids.push_back(100 + i);
    labels.push_back(i % 3);
  }
  return LabeledImages{"toy", Split::Test, random_images(n, shape, 1), LabelBatch(torch::tensor(labels)), ids, 3};
}

LinearClassifier toy_classifier(ImageShape shape = {1, 6, 6}) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(2);
  return LinearClassifier(torch::randn({3, shape.numel()}, gen), torch::zeros({3}), shape, "toy-linear");
}

attacks::AttackConfig cfg_of(attacks::AttackKind kind) {
  auto cfg = attacks::AttackConfig::defaults(kind);
  cfg.iterations = 3;
  cfg.cw_steps = 5;
  return cfg;
}

}  // namespace

TEST_CASE("IDX image and label files decode to the written bytes") {
  TempDir dir;
  std::string img;
  put_be32(img, 0x00000803);
  put_be32(img, 2);
  put_be32(img, 2);
  put_be32(img, 3);
  for (int i = 0; i < 12; ++i) img.push_back(static_cast<char>(i * 20));
  std::string lab;
  put_be32(lab, 0x00000801);
  put_be32(lab, 2);
  lab.push_back(7);
  lab.push_back(2);
  write_bytes(dir.path() / "img", img);
  write_bytes(dir.path() / "lab", lab);

  const auto data = read_idx_pair(dir.path() / "img", dir.path() / "lab", "tiny", Split::Train);
  REQUIRE(data.size() == 2);
  CHECK(data.images.shape() == ImageShape{1, 2, 3});
  CHECK(data.labels[0] == 7);
  CHECK(data.labels[1] == 2);
  CHECK(data.ids == std::vector<std::int64_t>{0, 1});
  const auto flat = data.images.tensor().view(-1);
  for (int i = 0; i < 12; ++i) CHECK(flat[i].item<float>() == doctest::Approx(i * 20 / 255.0));

  lab[3] = 0x03;
  write_bytes(dir.path() / "bad", lab);
  CHECK_THROWS_AS(read_idx_pair(dir.path() / "img", dir.path() / "bad", "tiny", Split::Train), FormatError);
}

TEST_CASE("CIFAR binary rows decode label-first, channel-major") {
  TempDir dir;
  std::string rows;
  for (int r = 0; r < 2; ++r) {
    rows.push_back(static_cast<char>(r == 0 ? 4 : 9));
    for (int k = 0; k < 3 * 32 * 32; ++k) rows.push_back(static_cast<char>(k / 1024 * 100 + r));
  }
  write_bytes(dir.path() / "data_batch_1.bin", rows);
  const auto data = read_cifar_batches({dir.path() / "data_batch_1.bin"}, Split::Train);
  REQUIRE(data.size() == 2);
  CHECK(data.labels[0] == 4);
  CHECK(data.labels[1] == 9);
  CHECK(data.images.tensor()[1][2][5][5].item<float>() == doctest::Approx(201 / 255.0));
  write_bytes(dir.path() / "short.bin", rows.substr(0, 10));
  CHECK_THROWS_AS(read_cifar_batches({dir.path() / "short.bin"}, Split::Train), FormatError);
}

TEST_CASE("bundled MNIST loads from the data root") {
  const auto train = load_dataset("mnist", Split::Train);
  const auto test = load_dataset("mnist", Split::Test);
  CHECK(train.size() == 4000);
  CHECK(test.size() == 1000);
  CHECK(train.images.shape() == ImageShape{1, 28, 28});
  CHECK(train.labels.tensor().min().item<std::int64_t>() == 0);
  CHECK(train.labels.tensor().max().item<std::int64_t>() == 9);
}

TEST_CASE("missing and unknown datasets raise helpful errors") {
  TempDir dir;
  CHECK_THROWS_AS(load_dataset("mnist", Split::Train, dir.path()), DataError);
  CHECK_THROWS_AS(load_dataset("cifar10", Split::Test, dir.path()), DataError);
  CHECK_THROWS_AS(load_dataset("svhn", Split::Train, dir.path()), ConfigError);
}

TEST_CASE("seeded subsets are reproducible, sorted and seed-dependent") {
  const auto data = toy_images(50);
  const auto a = seeded_subset(data, 20, 7);
  const auto b = seeded_subset(data, 20, 7);
  const auto c = seeded_subset(data, 20, 8);
  CHECK(a.ids == b.ids);
  CHECK(a.ids != c.ids);
  CHECK(std::is_sorted(a.ids.begin(), a.ids.end()));
  CHECK(std::set<std::int64_t>(a.ids.begin(), a.ids.end()).size() == 20);
  CHECK(seeded_subset(data, 0, 7).size() == 50);
  CHECK_THROWS_AS(seeded_subset(data, 51, 7), ConfigError);
}

TEST_CASE("tensor containers round-trip bit-exactly and detect corruption") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(3);
  const TensorList tensors{{"f", torch::randn({3, 4}, gen)},
                           {"d", torch::randn({2}, gen).to(torch::kFloat64)},
                           {"l", torch::arange(5, torch::kLong)},
                           {"u", torch::arange(4).to(torch::kUInt8)}};
  const auto bytes = encode_tensors(tensors);
  const auto back = decode_tensors(bytes);
  REQUIRE(back.size() == tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    CHECK(back[i].name == tensors[i].name);
    CHECK((back[i].tensor.scalar_type() == tensors[i].tensor.scalar_type()));
    CHECK(torch::equal(back[i].tensor, tensors[i].tensor));
  }
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(decode_tensors(flipped), FormatError);
  CHECK_THROWS_AS(decode_tensors(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(decode_tensors("nope"), FormatError);
  CHECK_THROWS_AS(find_tensor(back, "missing"), Error);
}

TEST_CASE("sha256 matches a published test vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("manifests round-trip through JSONL and validate attack names") {
  DatasetManifest m;
  m.name = "toy";
  m.split = Split::Test;
  m.provenance = {{"seed", 3}};
  ManifestRecord r;
  r.image_id = 5;
  r.label = 2;
  r.attack = "PGD";
  r.model_id = "m";
  r.epsilon = 0.3;
  r.success = true;
  r.iterations = 40;
  m.records.push_back(r);
  m.fingerprint = m.compute_fingerprint("payload");
  const auto back = DatasetManifest::from_jsonl(m.to_jsonl());
  CHECK(back.to_jsonl() == m.to_jsonl());
  CHECK(back.compute_fingerprint("payload") == m.fingerprint);
  CHECK(m.compute_fingerprint("other") != m.fingerprint);
  m.records[0].attack = "NOPE";
  CHECK_THROWS_AS(m.validate(), ConfigError);
  CHECK_THROWS_AS(DatasetManifest::from_jsonl(""), FormatError);
}

TEST_CASE("cross-product datasets hold every image under every attack in id order") {
  const auto clean = toy_images(5);
  const auto clf = toy_classifier();
  const auto d = build_adversarial_dataset(clean, clf, {cfg_of(attacks::AttackKind::PGD), cfg_of(attacks::AttackKind::FGSM)},
                                           CompositionMode::CrossProduct, 1);
  REQUIRE(d.size() == 10);
  for (std::int64_t i = 0; i < d.size(); ++i) {
    const auto& rec = d.manifest.records[static_cast<std::size_t>(i)];
    CHECK(rec.image_id == 100 + i / 2);
    CHECK(rec.attack == (i % 2 == 0 ? "FGSM" : "PGD"));
    CHECK(rec.tensor_offset == i);
    CHECK(rec.model_id == "toy-linear");
    CHECK(torch::equal(d.clean[i], clean.images.tensor()[i / 2]));
  }
  CHECK(d.attack_names() == std::vector<std::string>{"FGSM", "PGD"});
  const auto only_pgd = d.filter(attacks::AttackKind::PGD);
  CHECK(only_pgd.size() == 5);
  CHECK(only_pgd.manifest.records.back().tensor_offset == 4);
  CHECK(d.filter(attacks::AttackKind::CW).size() == 0);
  CHECK_THROWS_AS(d.filter(attacks::AttackKind::CW).adversarial_batch(), DataError);
}

TEST_CASE("partition mode assigns image k to attack k mod |attacks|") {
  const auto clean = toy_images(7);
  const auto d = build_adversarial_dataset(clean, toy_classifier(),
                                           {cfg_of(attacks::AttackKind::FGSM), cfg_of(attacks::AttackKind::BIM)},
                                           CompositionMode::Partition, 1);
  REQUIRE(d.size() == 7);
  for (const auto& rec : d.manifest.records) {
    CHECK(rec.attack == ((rec.image_id - 100) % 2 == 0 ? "FGSM" : "BIM"));
  }
  CHECK(parse_composition_mode(to_string(CompositionMode::Partition)) == CompositionMode::Partition);
  CHECK_THROWS_AS(parse_composition_mode("mix"), ConfigError);
}

TEST_CASE("adding an attack leaves other attacks' outputs unchanged") {
  const auto clean = toy_images(4);
  const auto clf = toy_classifier();
  const auto one = build_adversarial_dataset(clean, clf, {cfg_of(attacks::AttackKind::PGD)},
                                             CompositionMode::CrossProduct, 9);
  const auto two = build_adversarial_dataset(
      clean, clf, {cfg_of(attacks::AttackKind::FGSM), cfg_of(attacks::AttackKind::PGD)}, CompositionMode::CrossProduct, 9);
  CHECK(torch::equal(one.adversarial, two.filter(attacks::AttackKind::PGD).adversarial));
}

TEST_CASE("dataset construction rejects empty and duplicate attack lists") {
  const auto clean = toy_images(3);
  const auto clf = toy_classifier();
  CHECK_THROWS_AS(build_adversarial_dataset(clean, clf, {}, CompositionMode::CrossProduct, 0), ConfigError);
  CHECK_THROWS_AS(build_adversarial_dataset(clean, clf, {cfg_of(attacks::AttackKind::FGSM), cfg_of(attacks::AttackKind::FGSM)},
                                            CompositionMode::CrossProduct, 0),
                  ConfigError);
  CHECK_THROWS_AS(build_adversarial_dataset(toy_images(2, {1, 4, 4}), clf, {cfg_of(attacks::AttackKind::FGSM)},
                                            CompositionMode::CrossProduct, 0),
                  ShapeError);
}

TEST_CASE("adversarial datasets persist exactly and verify their fingerprint") {
  TempDir dir;
  const auto d = build_adversarial_dataset(toy_images(6), toy_classifier(),
                                           {cfg_of(attacks::AttackKind::FGSM), cfg_of(attacks::AttackKind::CW)},
                                           CompositionMode::CrossProduct, 4);
  d.save(dir.path() / "m.jsonl", dir.path() / "t.bin");
  const auto back = AdversarialDataset::load(dir.path() / "m.jsonl", dir.path() / "t.bin");
  CHECK(torch::equal(back.adversarial, d.adversarial));
  CHECK(torch::equal(back.clean, d.clean));
  CHECK(torch::equal(back.labels, d.labels));
  CHECK(back.manifest.fingerprint == d.manifest.fingerprint);

  auto tampered = d;
  tampered.adversarial = d.adversarial.clone();
  tampered.adversarial.view(-1)[0] = 0.5F;
  tampered.save(dir.path() / "m2.jsonl", dir.path() / "t2.bin");
  CHECK_THROWS_AS(AdversarialDataset::load(dir.path() / "m2.jsonl", dir.path() / "t2.bin"), FormatError);
  CHECK_THROWS_AS(AdversarialDataset::load(dir.path() / "none.jsonl", dir.path() / "t.bin"), MissingArtifactError);
}

TEST_CASE("8-bit quantization rounds half up and PNG files round-trip the bytes") {
  CHECK(quantize_pixel(0.0F) == 0);
  CHECK(quantize_pixel(1.0F) == 255);
  CHECK(quantize_pixel(0.5F) == 128);
  CHECK(quantize_pixel(1.0F / 255.0F) == 1);
  TempDir dir;
  for (const ImageShape shape : {ImageShape{1, 5, 7}, ImageShape{3, 4, 4}}) {
    const auto batch = random_images(3, shape, 8);
    const auto files = export_png(batch, dir.path(), "p" + std::to_string(shape.channels));
    REQUIRE(files.size() == 3);
    const auto back = import_png(files);
    CHECK(torch::equal(back.tensor(), dequantize_bytes(quantize_bytes(batch.tensor()))));
    CHECK((back.tensor() - batch.tensor()).abs().max().item<float>() <= 0.5F / 255.0F + 1e-6F);
  }
}
