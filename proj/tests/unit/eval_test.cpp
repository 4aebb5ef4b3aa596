#include "advpurify/core/errors.hpp"
#include "advpurify/datasets/adversarial_dataset.hpp"
#include "advpurify/eval/metrics.hpp"
#include "advpurify/eval/plot.hpp"
#include "advpurify/eval/protocols.hpp"
#include "advpurify/eval/report.hpp"
#include "support.hpp"

#include "doctest_torch.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

using namespace advpurify;
using namespace advpurify::eval;
using advpurify::testing::random_images;
using advpurify::testing::TempDir;

namespace {

ImageBatch constant(float v, std::int64_t n = 1, ImageShape shape = {1, 2, 2}) {
  return ImageBatch(torch::full({n, shape.channels, shape.height, shape.width}, v));
}

// Hand-built linear classifier on 1x1x2 images: class = argmax(x0, x1).
LinearClassifier two_pixel() {
  return LinearClassifier(torch::tensor({{1.0F, 0.0F}, {0.0F, 1.0F}}), torch::zeros({2}), ImageShape{1, 1, 2});
}

}  // namespace

TEST_CASE("accuracy counts argmax agreement in percent") {
  const auto clf = two_pixel();
  const ImageBatch x(torch::tensor({0.9F, 0.1F, 0.2F, 0.8F, 0.7F, 0.3F, 0.4F, 0.6F}).view({4, 1, 1, 2}));
  CHECK(accuracy(clf, x, LabelBatch{0, 1, 0, 1}) == 100.0);
  CHECK(accuracy(clf, x, LabelBatch{0, 0, 0, 0}) == 50.0);
  CHECK(accuracy(clf, x, LabelBatch{1, 0, 1, 1}) == 25.0);
  CHECK_THROWS_AS(accuracy(clf, x, LabelBatch{0, 1}), ShapeError);
}

TEST_CASE("accuracy over more than one chunk") {
  const auto clf = two_pixel();
  auto t = torch::zeros({1203, 1, 1, 2});
  t.select(3, 0).fill_(1.0);
  std::vector<std::int64_t> labels(1203, 0);
  for (std::size_t i = 0; i < 300; ++i) labels[i * 4] = 1;
  CHECK(accuracy(clf, ImageBatch(t), LabelBatch(torch::tensor(labels))) == doctest::Approx(100.0 * 903 / 1203));
}

TEST_CASE("PSNR uses MAX = 1 and excludes identical pairs") {
  const auto zero = constant(0.0F);
  CHECK(psnr_per_image(zero, constant(0.1F))[0] == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(psnr_per_image(zero, constant(0.5F))[0] == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-9));
  CHECK(std::isinf(psnr_per_image(zero, zero)[0]));

  const ImageBatch a(torch::cat({constant(0.0F).tensor(), constant(0.0F).tensor()}));
  const ImageBatch b(torch::cat({constant(0.0F).tensor(), constant(0.1F).tensor()}));
  const auto s = psnr(a, b);
  CHECK(s.excluded == 1);
  CHECK(s.images == 2);
  CHECK(s.mean_db == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(psnr(zero, zero).mean_db == kPsnrInf);
  CHECK_THROWS_AS(psnr(zero, constant(0.0F, 2)), ShapeError);
}

TEST_CASE("MAE is the mean absolute pixel difference") {
  const ImageBatch a(torch::tensor({0.0F, 0.5F, 1.0F, 0.25F}).view({1, 1, 2, 2}));
  const ImageBatch b(torch::tensor({0.5F, 0.5F, 0.0F, 0.75F}).view({1, 1, 2, 2}));
  CHECK(mae(a, b) == doctest::Approx(0.5));
  CHECK(mae(a, a) == 0.0);
}

TEST_CASE("generalizability is one minus the accuracy ratio") {
  CHECK(*generalizability(72.4, 69.2) == doctest::Approx(-0.046).epsilon(0.001 / 0.046));
  CHECK(*generalizability(50.0, 100.0) == doctest::Approx(0.5));
  CHECK(*generalizability(80.0, 80.0) == 0.0);
  CHECK_FALSE(generalizability(10.0, 0.0).has_value());
}

TEST_CASE("matrix builder derives G only for foreign attack columns") {
  const std::vector<std::string> conditions{"CLEAN", "FGSM", "BIM", "DEEPFOOL"};
  const auto m = build_generalizability_matrix({"Model_FGSM", "Combined"}, {"FGSM", "COMBINED"}, conditions,
                                               {{74.8, 69.2, 72.4, 70.3}, {75.0, 70.0, 71.0, std::nullopt}},
                                               {76.8, 25.8, 1.8, 0.4});
  CHECK_FALSE(m.g[0][0].has_value());
  CHECK_FALSE(m.g[0][1].has_value());
  CHECK(*m.g[0][2] == doctest::Approx(1.0 - 72.4 / 69.2));
  CHECK(*m.g[0][3] == doctest::Approx(1.0 - 70.3 / 69.2));
  for (const auto& cell : m.g[1]) CHECK_FALSE(cell.has_value());

  const auto json = m.to_json();
  CHECK(json["models"][0]["g"][0].is_null());
  CHECK(json["models"][1]["acc"][3].is_null());
  const auto csv = m.to_csv();
  CHECK(csv.rfind("model,trained_on,acc_CLEAN,g_CLEAN", 0) == 0);
  CHECK(csv.find("No defense") != std::string::npos);

  CHECK_THROWS_AS(build_generalizability_matrix({"a"}, {"FGSM"}, conditions, {{1.0, 2.0}}), ShapeError);
}

TEST_CASE("report rows validate their ranges") {
  ReportRow row;
  row.accuracy = 50.0;
  row.psnr = kPsnrInf;
  CHECK_NOTHROW(row.validate());
  row.accuracy = 101.0;
  CHECK_THROWS_AS(row.validate(), ConfigError);
  row.accuracy = 50.0;
  row.mae = -1.0;
  CHECK_THROWS_AS(row.validate(), ConfigError);
  row.mae = 0.0;
  row.psnr = -3.0;
  CHECK_THROWS_AS(row.validate(), ConfigError);
}

TEST_CASE("reports serialize deterministically and mark quantized paths") {
  EvaluationReport report;
  report.title = "t";
  ReportRow row;
  row.dataset = "mnist";
  row.attack = "PGD";
  row.model_id = "a,b";
  row.accuracy = 12.5;
  row.psnr = kPsnrInf;
  row.mae = 0.25;
  row.n_images = 8;
  report.rows.push_back(row);
  CHECK(report.to_jsonl() == report.to_jsonl());
  const auto csv = report.to_csv();
  CHECK(csv.find("mnist,PGD,0,\"a,b\",NONE,12.5,INF,0,0.25,8,") != std::string::npos);
  CHECK(report.to_jsonl().find("\"psnr\":\"INF\"") != std::string::npos);
  CHECK(report.find("PGD", kNoDefense) != nullptr);
  CHECK(report.find("PGD", "other") == nullptr);

  report.mark_quantized();
  report.mark_quantized();
  CHECK_FALSE(report.provenance.tensor_path);
  CHECK(std::count(report.provenance.tags.begin(), report.provenance.tags.end(), "quantized path") == 1);

  TempDir dir;
  report.save(dir.path(), "r");
  CHECK(std::filesystem::exists(dir.path() / "r.jsonl"));
  CHECK(std::filesystem::exists(dir.path() / "r.csv"));
  CHECK(format_number(kPsnrInf) == "INF");
  CHECK(format_number(0.1) == "0.1");
}

TEST_CASE("line plots are deterministic SVG with one path per series") {
  const std::vector<Series> series{{"PGD", {10, 20, 30}, {90, 91, 89}}, {"MIFGSM", {10, 20, 30}, {88, 87, 88}}};
  PlotOptions opts{"sweep", "iterations", "accuracy", std::make_pair(0.0, 100.0)};
  const auto svg = line_plot_svg(series, opts);
  CHECK(svg == line_plot_svg(series, opts));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("PGD") != std::string::npos);
  CHECK(svg.find("MIFGSM") != std::string::npos);
  std::size_t polylines = 0;
  for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++polylines;
  CHECK(polylines == 2);
}

TEST_CASE("sweep config validation and stability band") {
  SweepConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.iterations.front() == 10);
  CHECK(cfg.iterations.back() == 100);
  cfg.iterations = {};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  SweepResult r;
  r.cells = {{attacks::AttackKind::PGD, 0.1, 10, 0.0, 80.0},
             {attacks::AttackKind::PGD, 0.1, 20, 0.0, 86.5},
             {attacks::AttackKind::PGD, 0.2, 10, 0.0, 10.0}};
  CHECK(r.stability_band(attacks::AttackKind::PGD, 0.1) == doctest::Approx(6.5));
  CHECK_THROWS_AS(r.stability_band(attacks::AttackKind::MIFGSM, 0.1), ConfigError);
}

TEST_CASE("ablation defaults start with the plain arm") {
  const AblationConfig cfg;
  CHECK(cfg.block_counts.front() == 0);
  CHECK(cfg.block_counts == std::vector<std::int64_t>{0, 1, 3, 5, 7, 9, 11, 13, 15});
  AblationResult result;
  result.arms.push_back({});
  result.arms.back().blocks = 3;
  CHECK(result.arm(3) != nullptr);
  CHECK(result.arm(5) == nullptr);
}

TEST_CASE("cross-model transfer refuses the source model as a target") {
  auto clf = advpurify::testing::random_convnet();
  defense::DefenseCheckpoint ckpt;
  datasets::LabeledImages test{"t", datasets::Split::Test, random_images(2), LabelBatch{0, 1}, {0, 1}, 10};
  CHECK_THROWS_AS(cross_model_transfer(ckpt, "d", clf->id(), {clf.get()}, test,
                                       {attacks::AttackConfig::defaults(attacks::AttackKind::FGSM)}, 0),
                  ConfigError);
}
