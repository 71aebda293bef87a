#include <doctest.h>

#include <cmath>
#include <vector>

#include "lungcadex/errors.hpp"
#include "lungcadex/eval/metrics.hpp"
#include "lungcadex/rng.hpp"

using namespace lungcadex;
using namespace lungcadex::eval;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      ++pairs;
    }
  }
  return wins / double(pairs);
}

struct Sample {
  std::vector<double> scores;
  std::vector<int> labels;
};

Sample random_sample(Rng& rng) {
  Sample s;
  const std::size_t n = 2 + rng.index(40);
  for (std::size_t i = 0; i < n; ++i) {
    s.scores.push_back(double(rng.index(8)) / 7.0);
    s.labels.push_back(int(rng.index(2)));
  }
  s.labels[0] = 0;
  s.labels[1] = 1;
  return s;
}

}  // namespace

TEST_CASE("auc examples") {
  CHECK(roc_auc(std::vector<double>{0.8, 0.6, 0.4, 0.2}, std::vector<int>{1, 0, 1, 0}) == doctest::Approx(0.75));
  CHECK(roc_auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}) == 0.0);
  CHECK(roc_auc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1}) == doctest::Approx(0.5));
}

TEST_CASE("auc errors") {
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), UndefinedMetricError);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), UndefinedMetricError);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1}, std::vector<int>{0, 1}), ContractError);
}

TEST_CASE("auc agrees with pairwise counting") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const Sample s = random_sample(rng);
    CHECK(std::abs(roc_auc(s.scores, s.labels) - pairwise_auc(s.scores, s.labels)) < 1e-9);
  }
}

TEST_CASE("auc is invariant under strictly increasing maps") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Sample s = random_sample(rng);
    std::vector<double> expd, affine, negated;
    for (double v : s.scores) {
      expd.push_back(std::exp(v));
      affine.push_back(3.0 * v - 1.0);
      negated.push_back(-v);
    }
    const double base = roc_auc(s.scores, s.labels);
    CHECK(roc_auc(expd, s.labels) == doctest::Approx(base).epsilon(1e-12));
    CHECK(roc_auc(affine, s.labels) == doctest::Approx(base).epsilon(1e-12));
    CHECK(base + roc_auc(negated, s.labels) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("confusion metrics") {
  const std::vector<double> scores{0.9, 0.7, 0.5, 0.3, 0.1, 0.6};
  const std::vector<int> labels{1, 0, 1, 1, 0, 0};
  const ConfusionCounts c = confusion_counts(scores, labels);
  CHECK(c.tp == 2);
  CHECK(c.fp == 2);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
  const MetricsReport m = metrics_report(scores, labels);
  CHECK(*m.accuracy == doctest::Approx(3.0 / 6.0));
  CHECK(*m.sensitivity == doctest::Approx(2.0 / 3.0));
  CHECK(*m.specificity == doctest::Approx(1.0 / 3.0));
  CHECK(*m.f1 == doctest::Approx(4.0 / 7.0));
  CHECK(m.n_samples == 6);
  CHECK(m.all_defined());
}

TEST_CASE("accuracy is the class-weighted mean of sensitivity and specificity") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const Sample s = random_sample(rng);
    const MetricsReport m = metrics_report(s.scores, s.labels);
    double pos = 0.0;
    for (int y : s.labels) pos += y;
    const double n = double(s.labels.size());
    CHECK(*m.accuracy == doctest::Approx((pos * *m.sensitivity + (n - pos) * *m.specificity) / n));
  }
}

TEST_CASE("undefined metrics stay empty") {
  const std::vector<double> scores{0.9, 0.8};
  const std::vector<int> labels{1, 1};
  const MetricsReport m = metrics_report(scores, labels);
  CHECK_FALSE(m.auc.has_value());
  CHECK_FALSE(m.specificity.has_value());
  CHECK(m.sensitivity.has_value());
  CHECK_FALSE(m.all_defined());
  const nlohmann::json j = m;
  CHECK(j.at("auc").is_null());
  CHECK(j.at("specificity").is_null());
  CHECK_THROWS_AS(metrics_report(std::vector<double>{}, std::vector<int>{}), InputError);
}
