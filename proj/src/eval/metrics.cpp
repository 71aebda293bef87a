#include "lungcadex/eval/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "lungcadex/errors.hpp"

namespace lungcadex::eval {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ContractError("scores and labels differ in length (" + std::to_string(scores.size()) + " vs " +
                        std::to_string(labels.size()) + ")");
  }
  if (scores.empty()) throw InputError("no samples to evaluate");
  for (int y : labels) {
    if (y != 0 && y != 1) throw InputError("labels must be 0 or 1");
  }
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  double positives = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * double(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) {
        positive_rank_sum += midrank;
        positives += 1.0;
      }
    }
    i = j;
  }
  const double negatives = double(n) - positives;
  if (positives == 0.0 || negatives == 0.0) throw UndefinedMetricError("AUC needs both positive and negative samples");
  return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

ConfusionCounts confusion_counts(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? c.tp : c.fn) += 1;
    } else {
      (predicted ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

MetricsReport confusion_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  MetricsReport r;
  r.counts = confusion_counts(scores, labels, threshold);
  r.threshold = threshold;
  r.n_samples = scores.size();
  const auto [tp, fp, tn, fn] = r.counts;
  r.accuracy = double(tp + tn) / double(tp + fp + tn + fn);
  if (tp + fn > 0) r.sensitivity = double(tp) / double(tp + fn);
  if (tn + fp > 0) r.specificity = double(tn) / double(tn + fp);
  if (2 * tp + fp + fn > 0) r.f1 = 2.0 * double(tp) / double(2 * tp + fp + fn);
  return r;
}

MetricsReport metrics_report(std::span<const double> scores, std::span<const int> labels, double threshold) {
  MetricsReport r = confusion_metrics(scores, labels, threshold);
  const long positives = r.counts.tp + r.counts.fn;
  if (positives > 0 && positives < static_cast<long>(r.n_samples)) r.auc = roc_auc(scores, labels);
  return r;
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  auto value = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = {{"auc", value(r.auc)},
       {"accuracy", value(r.accuracy)},
       {"sensitivity", value(r.sensitivity)},
       {"specificity", value(r.specificity)},
       {"f1", value(r.f1)},
       {"n_samples", r.n_samples},
       {"threshold", r.threshold},
       {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}}};
}

}  // namespace lungcadex::eval
