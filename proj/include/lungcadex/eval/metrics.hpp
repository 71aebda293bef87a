#pragma once

#include <cstddef>
#include <json.hpp>
#include <optional>
#include <span>

namespace lungcadex::eval {

/// Mann-Whitney statistic with midranks for ties. Throws UndefinedMetricError
/// unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct ConfusionCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Metrics whose denominators vanish are left empty.
struct MetricsReport {
  std::optional<double> auc;
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> f1;
  std::size_t n_samples = 0;
  double threshold = 0.5;
  ConfusionCounts counts;

  bool all_defined() const { return auc && accuracy && sensitivity && specificity && f1; }
};

ConfusionCounts confusion_counts(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Accuracy, sensitivity, specificity and F1 at score >= threshold; auc is left empty.
MetricsReport confusion_metrics(std::span<const double> scores, std::span<const int> labels,
                                double threshold = 0.5);

/// confusion_metrics plus AUC when both classes are present.
MetricsReport metrics_report(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

void to_json(nlohmann::json& j, const MetricsReport& report);

}  // namespace lungcadex::eval
