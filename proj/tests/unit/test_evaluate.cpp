#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "fixtures.hpp"
#include "lungcadex/errors.hpp"
#include "lungcadex/eval/evaluate.hpp"
#include "lungcadex/eval/reference.hpp"

using namespace lungcadex;
using namespace lungcadex::eval;

namespace {

long line_count(const std::string& text) { return std::count(text.begin(), text.end(), '\n'); }

}  // namespace

TEST_CASE("ground-truth evaluation scores every test nodule") {
  const testing::PhantomFixture& ph = testing::shared_phantom();
  const testing::PipelineFixture& pipe = testing::shared_pipeline();
  const Evaluation ev = evaluate(ph.test, *pipe.encoders, ph.train, pipe.classifier, retrieval::kDefaultK);
  CHECK(ev.mode == EvalMode::ground_truth_patches);
  CHECK(ev.k == retrieval::kDefaultK);
  CHECK(ev.report.n_samples == ph.test.size());
  REQUIRE(ev.samples.size() == ph.test.size());
  for (std::size_t i = 0; i < ev.samples.size(); ++i) {
    CHECK(ev.samples[i].nodule_id == ph.test[i].nodule_id);
    CHECK(ev.samples[i].label == (ph.test[i].label.cls == gallery::MalignancyClass::malignant ? 1 : 0));
  }
  REQUIRE(ev.report.all_defined());
  CHECK(*ev.report.auc >= 0.9);
  CHECK(*ev.report.accuracy > 0.9);
  const nlohmann::json j = ev;
  CHECK(j.at("samples").size() == ph.test.size());
  const Evaluation threaded = evaluate(ph.test, *pipe.encoders, ph.train, pipe.classifier, retrieval::kDefaultK, 4);
  CHECK(threaded.report.auc == ev.report.auc);
}

TEST_CASE("evaluation input errors") {
  const testing::PhantomFixture& ph = testing::shared_phantom();
  const testing::PipelineFixture& pipe = testing::shared_pipeline();
  CHECK_THROWS_AS(evaluate(gallery::FeatureGallery{}, *pipe.encoders, ph.train, pipe.classifier, 5), InputError);
  const cadx::AlignedEncoders raw(cadx::AlignConfig::toy(), 1);
  CHECK_THROWS_AS(evaluate(ph.test, raw, ph.train, pipe.classifier, 5), StateError);
  CHECK_THROWS_AS(evaluate(ph.test, *pipe.encoders, ph.train, retrieval::LinearClassifier{}, 5), StateError);
}

TEST_CASE("ablation columns equal single-k evaluations") {
  const testing::PhantomFixture& ph = testing::shared_phantom();
  const testing::PipelineFixture& pipe = testing::shared_pipeline();
  AblationOptions options;
  options.retrain_classifier = false;
  const AblationTable table = ablate_k(ph.test, *pipe.encoders, ph.train, pipe.classifier, options);
  REQUIRE(table.ks.size() == 9);
  REQUIRE(table.reports.size() == 9);
  CHECK_FALSE(table.retrained);
  for (std::size_t i = 0; i < table.ks.size(); ++i) {
    CHECK(table.ks[i] == int(i) + 1);
    const Evaluation ev = evaluate(ph.test, *pipe.encoders, ph.train, pipe.classifier, table.ks[i]);
    CHECK(table.reports[i].auc == ev.report.auc);
    CHECK(table.reports[i].accuracy == ev.report.accuracy);
    CHECK(table.reports[i].f1 == ev.report.f1);
  }
  const std::string text = format_ablation_table(table);
  CHECK(text.find("Number of learning examples (k)") == 0);
  CHECK(line_count(text) == 8);
  for (const char* row : {"AUC", "Sensitivity", "Specificity", "F1", "ACC"}) CHECK(text.find(row) != std::string::npos);
  const nlohmann::json j = table;
  CHECK(j.at("retrained_classifier") == false);
  CHECK(j.at("columns").size() == 9);
}

TEST_CASE("retrained ablation matches a classifier fit at the same k") {
  const testing::PhantomFixture& ph = testing::shared_phantom();
  const testing::PipelineFixture& pipe = testing::shared_pipeline();
  AblationOptions options;
  options.k_min = 5;
  options.k_max = 5;
  const AblationTable table = ablate_k(ph.test, *pipe.encoders, ph.train, pipe.classifier, options);
  REQUIRE(table.reports.size() == 1);
  const Evaluation ev = evaluate(ph.test, *pipe.encoders, ph.train, pipe.classifier, 5);
  CHECK(table.reports[0].auc == ev.report.auc);
}

TEST_CASE("ablation range errors") {
  const testing::PhantomFixture& ph = testing::shared_phantom();
  const testing::PipelineFixture& pipe = testing::shared_pipeline();
  AblationOptions options;
  options.k_min = 4;
  options.k_max = 3;
  CHECK_THROWS_AS(ablate_k(ph.test, *pipe.encoders, ph.train, pipe.classifier, options), ParameterError);
  options.k_min = 0;
  options.k_max = 3;
  CHECK_THROWS_AS(ablate_k(ph.test, *pipe.encoders, ph.train, pipe.classifier, options), ParameterError);
}

TEST_CASE("segmentation and automatic evaluation on held-out scans") {
  const testing::PhantomFixture& ph = testing::shared_phantom();
  const testing::PipelineFixture& pipe = testing::shared_pipeline();
  const SegmentationReport seg = evaluate_segmentation(ph.dataset, ph.split.test_scan_ids, pipe.cade->model);
  CHECK(seg.n_slices > 0);
  CHECK(seg.pooled_dice >= 0.8);
  CHECK(seg.mean_dice > 0.0);
  CHECK(seg.prompt == "nodule");
  const retrieval::DiagnosisPipeline pipeline(*pipe.cade, *pipe.encoders, ph.train, pipe.classifier);
  const Evaluation automatic = evaluate_automatic(ph.dataset, ph.test, pipeline);
  CHECK(automatic.mode == EvalMode::automatic);
  CHECK(automatic.report.n_samples == ph.test.size());
  long detected = 0;
  for (const auto& s : automatic.samples) {
    detected += s.detected;
    if (!s.detected) CHECK(s.score == 0.0);
  }
  CHECK(double(detected) / double(ph.test.size()) >= 0.9);
}

TEST_CASE("metrics table layout") {
  MetricsReport r;
  r.auc = 0.69;
  r.accuracy = 0.71;
  r.sensitivity = 0.86;
  r.specificity = 0.56;
  const std::string text = format_metrics_table("LIDC", {{"Ours", r}, {"Empty", MetricsReport{}}});
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() >= 4);
  CHECK(text.find("Network") != std::string::npos);
  CHECK(text.find("Specificity") != std::string::npos);
  CHECK(text.find("0.690") != std::string::npos);
  CHECK(text.find('-') != std::string::npos);
}

TEST_CASE("published reference values") {
  namespace ref = reference;
  CHECK(ref::kPickedK == retrieval::kDefaultK);
  CHECK(ref::kLidcTestNodules == 264);
  CHECK(ref::kLidcOurs.auc == 0.69);
  CHECK(ref::kAblationAuc[ref::kPickedK - 1] == 0.698);
  CHECK(ref::kAblationAccuracy.size() == 9);
}
