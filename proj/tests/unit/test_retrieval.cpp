#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "lungcadex/errors.hpp"
#include "lungcadex/retrieval/diagnose.hpp"
#include "lungcadex/rng.hpp"

using namespace lungcadex;
using namespace lungcadex::retrieval;

namespace {

std::vector<std::size_t> brute_top_k(const std::vector<double>& scores, int k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min<std::size_t>(order.size(), std::size_t(k)));
  return order;
}

RetrievalHit hit(double similarity, double fill) {
  RetrievalHit h;
  h.similarity = similarity;
  h.features.values.fill(fill);
  return h;
}

}  // namespace

TEST_CASE("top_k breaks ties by lower index") {
  const std::vector<double> scores{0.5, 0.9, 0.5, 0.9, 0.1};
  CHECK(top_k_indices(scores, 3) == std::vector<std::size_t>{1, 3, 0});
  CHECK(top_k_indices(scores, 10).size() == 5);
  CHECK_THROWS_AS(top_k_indices(scores, 0), ParameterError);
}

TEST_CASE("top_k agrees with a full sort") {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + int(rng.index(60));
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (auto& s : scores) s = double(rng.index(10)) / 9.0;
    const int k = 1 + int(rng.index(20));
    CHECK(top_k_indices(scores, k) == brute_top_k(scores, k));
  }
}

TEST_CASE("retrieval excludes the query entry and validates inputs") {
  const testing::PhantomFixture& ph = testing::shared_phantom();
  const testing::PipelineFixture& pipe = testing::shared_pipeline();
  const auto embeddings = embed_gallery(*pipe.encoders, ph.train);
  REQUIRE(embeddings.size() == ph.train.size());
  const auto& query = embeddings[3];
  const RetrievalResult self = retrieve_top_k(query, ph.train, embeddings, 1);
  REQUIRE(self.hits.size() == 1);
  CHECK(self.hits[0].index == 3);
  CHECK(self.hits[0].similarity == doctest::Approx(1.0).epsilon(1e-5));
  const RetrievalResult others = retrieve_top_k(query, ph.train, embeddings, 5, std::size_t{3});
  CHECK(others.hits.size() == 5);
  for (const auto& h : others.hits) CHECK(h.index != 3);
  for (std::size_t i = 1; i < others.hits.size(); ++i) {
    CHECK(others.hits[i - 1].similarity >= others.hits[i].similarity);
  }
  CHECK_THROWS_AS(retrieve_top_k(query, ph.train, embeddings, 0), ParameterError);
  CHECK_THROWS_AS(retrieve_top_k(query, gallery::FeatureGallery{}, {}, 1), InputError);
  const std::vector<float> short_query(3, 0.0f);
  CHECK_THROWS_AS(retrieve_top_k(short_query, ph.train, embeddings, 1), ContractError);
}

TEST_CASE("patch retrieval returns gallery labels and features") {
  const testing::PhantomFixture& ph = testing::shared_phantom();
  const testing::PipelineFixture& pipe = testing::shared_pipeline();
  const RetrievalResult r = retrieve_top_k(ph.test[0].patch, ph.train, *pipe.encoders, kDefaultK);
  CHECK(r.k == kDefaultK);
  REQUIRE(r.hits.size() == std::size_t(kDefaultK));
  for (const auto& h : r.hits) {
    CHECK(h.features == ph.train[h.index].features);
    CHECK(h.label.cls == ph.train[h.index].label.cls);
    CHECK(h.nodule_id == ph.train[h.index].nodule_id);
  }
}

TEST_CASE("aggregation") {
  RetrievalResult r;
  r.hits = {hit(0.9, 1.0), hit(0.3, 4.0), hit(-0.5, 2.0)};
  const auto mean = aggregate_hits(r, Aggregation::mean);
  for (double v : mean.values) CHECK(v == doctest::Approx(7.0 / 3.0));
  const auto weighted = aggregate_hits(r, Aggregation::similarity_weighted);
  for (double v : weighted.values) CHECK(v == doctest::Approx((0.9 * 1.0 + 0.3 * 4.0) / 1.2));
  RetrievalResult negative;
  negative.hits = {hit(-0.1, 1.0), hit(-0.2, 3.0)};
  for (double v : aggregate_hits(negative, Aggregation::similarity_weighted).values) CHECK(v == doctest::Approx(2.0));
  CHECK_THROWS_AS(aggregate_hits(RetrievalResult{}), ContractError);
  CHECK(aggregation_from_string(to_string(Aggregation::similarity_weighted)) == Aggregation::similarity_weighted);
  CHECK_THROWS_AS(aggregation_from_string("median"), ConfigError);
}

TEST_CASE("classifier probability and thresholding") {
  LinearClassifier clf;
  clf.weights.assign(gallery::kFeatureCount, 0.0);
  clf.weights[0] = 1.0;
  clf.bias = -3.0;
  clf.fitted = true;
  gallery::RadiomicFeatureVector x;
  x.values.fill(3.0);
  CHECK(clf.probability(x) == doctest::Approx(0.5));
  CHECK(classify(x, clf).cls == gallery::MalignancyClass::malignant);
  x[0] = 2.9;
  CHECK(classify(x, clf).cls == gallery::MalignancyClass::benign);
  const std::vector<double> short_x(3, 1.0);
  CHECK_THROWS_AS(clf.logit(short_x), ContractError);
}

TEST_CASE("logistic fit is antisymmetric under label flips") {
  Rng rng(5);
  std::vector<std::vector<double>> x;
  std::vector<int> y, flipped;
  for (int i = 0; i < 60; ++i) {
    const int label = i % 2;
    std::vector<double> row(gallery::kFeatureCount);
    for (auto& v : row) v = 2.0 + label + rng.normal() * 0.8;
    x.push_back(row);
    y.push_back(label);
    flipped.push_back(1 - label);
  }
  const LinearClassifier a = train_linear(x, y, 1e-2);
  const LinearClassifier b = train_linear(x, flipped, 1e-2);
  CHECK(a.fitted);
  for (std::size_t i = 0; i < a.weights.size(); ++i) CHECK(a.weights[i] == doctest::Approx(-b.weights[i]).epsilon(1e-3));
  CHECK(a.bias == doctest::Approx(-b.bias).epsilon(1e-3));
  long correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) correct += (a.probability(x[i]) >= 0.5) == (y[i] == 1);
  CHECK(double(correct) / double(x.size()) > 0.9);
}

TEST_CASE("logistic fit input errors") {
  const std::vector<std::vector<double>> x{{1.0}, {2.0}};
  CHECK_THROWS_AS(train_linear(x, {1, 1}), TrainingError);
  CHECK_THROWS_AS(train_linear(x, {1}), InputError);
  CHECK_THROWS_AS(train_linear(x, {0, 2}), InputError);
  CHECK_THROWS_AS(train_linear(x, {0, 1}, -1.0), ParameterError);
  CHECK_THROWS_AS(train_linear({{1.0}, {1.0, 2.0}}, {0, 1}), ContractError);
}

TEST_CASE("classifier files round trip") {
  const testing::PipelineFixture& pipe = testing::shared_pipeline();
  const auto dir = testing::scratch_dir("classifier");
  save_classifier(dir / "clf.json", pipe.classifier);
  const LinearClassifier back = load_classifier(dir / "clf.json");
  CHECK(back.weights == pipe.classifier.weights);
  CHECK(back.bias == pipe.classifier.bias);
  CHECK(back.k == pipe.classifier.k);
  CHECK(back.aggregation == pipe.classifier.aggregation);
  CHECK(back.fitted);
  CHECK_THROWS_AS(load_classifier(dir / "missing.json"), MissingFileError);
}

TEST_CASE("default retrieval depth") {
  CHECK(kDefaultK == 5);
  CHECK(LinearClassifier{}.k == 5);
  CHECK(DiagnoseOptions{}.k == 5);
  CHECK(testing::shared_pipeline().classifier.k == kDefaultK);
}

TEST_CASE("pipeline refuses untrained stages") {
  const testing::PhantomFixture& ph = testing::shared_phantom();
  const testing::PipelineFixture& pipe = testing::shared_pipeline();
  const cade::TrainState fresh(cade::SegModelConfig::toy(), cade::PromptSuite::standard(), 1);
  const cadx::AlignedEncoders raw(cadx::AlignConfig::toy(), 1);
  CHECK_THROWS_AS(DiagnosisPipeline(fresh, *pipe.encoders, ph.train, pipe.classifier), StateError);
  CHECK_THROWS_AS(DiagnosisPipeline(*pipe.cade, raw, ph.train, pipe.classifier), StateError);
  CHECK_THROWS_AS(DiagnosisPipeline(*pipe.cade, *pipe.encoders, ph.train, LinearClassifier{}), StateError);
  CHECK_THROWS_AS(DiagnosisPipeline(*pipe.cade, *pipe.encoders, gallery::FeatureGallery{}, pipe.classifier),
                  InputError);
}

TEST_CASE("diagnosis of held-out slices matches the nodule classes") {
  const testing::PhantomFixture& ph = testing::shared_phantom();
  const testing::PipelineFixture& pipe = testing::shared_pipeline();
  const DiagnosisPipeline pipeline(*pipe.cade, *pipe.encoders, ph.train, pipe.classifier);
  int matched = 0, agreed = 0;
  for (const auto& entry : ph.test.entries()) {
    const auto slice = cade::load_slice(ph.dataset, entry.scan_id, entry.patch.slice_index);
    const auto diagnoses = pipeline.diagnose_slice(slice);
    const Diagnosis* best = nullptr;
    double best_iou = 0.0;
    for (const auto& d : diagnoses) {
      CHECK(d.k == kDefaultK);
      CHECK(d.retrieved_ids.size() == std::size_t(kDefaultK));
      CHECK(d.probability >= 0.0);
      CHECK(d.probability <= 1.0);
      const double o = iou(d.bbox, entry.bbox);
      if (o > best_iou) {
        best_iou = o;
        best = &d;
      }
    }
    if (best == nullptr || best_iou < 0.3) continue;
    ++matched;
    agreed += best->cls == entry.label.cls;
  }
  CHECK(double(matched) / double(ph.test.size()) >= 0.9);
  CHECK(double(agreed) / double(matched) >= 0.85);
  DiagnoseOptions bad;
  bad.k = 0;
  const auto slice = cade::load_slice(ph.dataset, ph.test[0].scan_id, ph.test[0].patch.slice_index);
  CHECK_THROWS_AS(pipeline.diagnose_slice(slice, bad), ParameterError);
}

TEST_CASE("hits for k are a prefix of hits for k + 1") {
  const testing::PhantomFixture& ph = testing::shared_phantom();
  const testing::PipelineFixture& pipe = testing::shared_pipeline();
  const auto embeddings = embed_gallery(*pipe.encoders, ph.train);
  const auto query = pipe.encoders->encode_patch(ph.test[1].patch);
  RetrievalResult previous = retrieve_top_k(query, ph.train, embeddings, 1);
  for (int k = 2; k <= 20; ++k) {
    const RetrievalResult r = retrieve_top_k(query, ph.train, embeddings, k);
    REQUIRE(r.hits.size() == previous.hits.size() + 1);
    for (std::size_t i = 0; i < previous.hits.size(); ++i) CHECK(r.hits[i].index == previous.hits[i].index);
    previous = r;
  }
}
