#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "lungcadex/cade/losses.hpp"
#include "lungcadex/cadx/similarity.hpp"
#include "lungcadex/eval/metrics.hpp"
#include "lungcadex/gallery/radiomics.hpp"
#include "lungcadex/ingest/volume.hpp"
#include "lungcadex/retrieval/retrieve.hpp"

// Values pinned here are recomputed independently by tests/oracles/loss_oracle.py.

using namespace lungcadex;

namespace {
constexpr double kTol = 1e-6;
}

TEST_CASE("pinned loss values") {
  CHECK(std::abs(cade::bce_loss(std::vector<double>{0.9, 0.1}, std::vector<double>{1, 0}) - 0.105361) < kTol);
  CHECK(std::abs(cade::bce_loss(std::vector<double>(4, 0.5), std::vector<double>{1, 0, 1, 1}) - 0.693147) < kTol);
  CHECK(std::abs(cade::dice_loss(std::vector<double>{1, 1, 0, 0}, std::vector<double>{1, 0, 1, 0}) - 0.5) < kTol);
  CHECK(std::abs(cade::combined_loss(std::vector<double>(4, 0.5), std::vector<double>{1, 1, 0, 0}) - 1.026480) <
        kTol);
}

TEST_CASE("pinned symmetric cross-entropy values") {
  cadx::SimilarityMatrix m;
  m.rows = m.cols = 2;
  m.values = {1, 0, 0, 1};
  cadx::SceOptions options;
  options.temperature = 1.0;
  const cadx::SceTerms t = cadx::sce_loss_terms(m, options);
  CHECK(std::abs(t.ce - 0.313262) < kTol);
  CHECK(std::abs(t.rce - 1.075766) < kTol);
  CHECK(std::abs(t.total - 1.389028) < kTol);
}

TEST_CASE("pinned metric values") {
  const std::vector<double> scores{0.8, 0.6, 0.4, 0.2};
  const std::vector<int> labels{1, 0, 1, 0};
  CHECK(std::abs(eval::roc_auc(scores, labels) - 0.75) < kTol);
  const std::vector<double> hard{1, 1, 0, 0};
  const eval::MetricsReport r = eval::confusion_metrics(hard, labels);
  CHECK(std::abs(*r.accuracy - 0.5) < kTol);
  CHECK(std::abs(*r.sensitivity - 0.5) < kTol);
  CHECK(std::abs(*r.specificity - 0.5) < kTol);
  CHECK(std::abs(*r.f1 - 0.5) < kTol);
}

TEST_CASE("pinned preprocessing values") {
  CHECK(std::abs(ingest::window_value(140.0f) - 0.75) < kTol);
  CHECK(std::abs(ingest::window_value(40.0f) - 0.5) < kTol);
  std::vector<std::string> ids;
  for (int i = 0; i < 888; ++i) ids.push_back("scan" + std::to_string(i));
  const auto split = ingest::split_by_scan(ids, 0.7, 0);
  CHECK(split.train_scan_ids.size() == 622);
  CHECK(split.test_scan_ids.size() == 266);
}

TEST_CASE("pinned retrieval and classifier values") {
  const std::vector<std::vector<float>> img{{0.6f, 0.8f}};
  const std::vector<std::vector<float>> feat{{1.0f, 0.0f}};
  CHECK(std::abs(cadx::similarity_matrix(img, feat).at(0, 0) - 0.6) < kTol);
  retrieval::LinearClassifier clf;
  clf.weights = {1, 0, 0, 0, 0, 0, 0, 0};
  clf.bias = -3.0;
  clf.fitted = true;
  const std::vector<double> x{3, 1, 1, 1, 1, 1, 1, 1};
  CHECK(std::abs(clf.probability(x) - 0.5) < kTol);
}

TEST_CASE("pinned consolidation value") {
  std::vector<gallery::RadiomicReading> readings(4);
  for (int r = 0; r < 4; ++r) {
    readings[r].attributes.fill(2.0);
    readings[r].attributes[0] = r + 1;
    readings[r].malignancy = 2.0;
  }
  CHECK(std::abs(gallery::consolidate_readings(readings).features[0] - 2.5) < kTol);
}
