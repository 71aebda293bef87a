#pragma once

#include <json.hpp>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lungcadex/eval/metrics.hpp"
#include "lungcadex/retrieval/diagnose.hpp"

namespace lungcadex::eval {

enum class EvalMode { ground_truth_patches, automatic };
std::string to_string(EvalMode mode);

struct SampleScore {
  std::string scan_id;
  std::string nodule_id;
  int label = 0;       // 1 malignant
  double score = 0.0;  // probability malignant
  bool detected = true;
  double iou = 1.0;    // overlap of the matched candidate, automatic mode only
};

struct Evaluation {
  EvalMode mode = EvalMode::ground_truth_patches;
  int k = retrieval::kDefaultK;
  MetricsReport report;
  std::vector<SampleScore> samples;
};

/// Scores ground-truth patches of the test gallery by retrieval against the training gallery.
Evaluation evaluate(const gallery::FeatureGallery& test, const cadx::AlignedEncoders& encoders,
                    const gallery::FeatureGallery& train, const retrieval::LinearClassifier& classifier, int k,
                    int threads = 1);

/// Segments each test nodule's median slice and scores the candidate that overlaps the
/// ground-truth box most. Undetected nodules score 0.
Evaluation evaluate_automatic(const ingest::Dataset& dataset, const gallery::FeatureGallery& test,
                              const retrieval::DiagnosisPipeline& pipeline,
                              const retrieval::DiagnoseOptions& options = {});

struct SegmentationReport {
  double pooled_dice = 0.0;  // 2 sum|S n G| / (sum|S| + sum|G|) over all slices
  double mean_dice = 0.0;    // per-slice Dice averaged
  std::size_t n_slices = 0;
  double threshold = 0.5;
  std::string prompt;
};

/// Binarized predictions on every contoured slice of the given scans.
SegmentationReport evaluate_segmentation(const ingest::Dataset& dataset, const std::set<std::string>& scan_ids,
                                         const cade::SegModel& model, const std::string& prompt = "nodule",
                                         double threshold = 0.5, int threads = 1);

struct AblationOptions {
  int k_min = 1;
  int k_max = 9;
  /// Refit the classifier on k-aggregated training features for each k; otherwise
  /// the given classifier is reused.
  bool retrain_classifier = true;
  double l2 = 1e-3;
  retrieval::Aggregation aggregation = retrieval::Aggregation::mean;
  int threads = 1;
};

struct AblationTable {
  std::vector<int> ks;
  std::vector<MetricsReport> reports;  // one per k
  bool retrained = true;
};

AblationTable ablate_k(const gallery::FeatureGallery& test, const cadx::AlignedEncoders& encoders,
                       const gallery::FeatureGallery& train, const retrieval::LinearClassifier& classifier,
                       const AblationOptions& options = {});

/// Aligned text table: Network | AUC | Accuracy | Sensitivity | Specificity.
std::string format_metrics_table(const std::string& title,
                                 const std::vector<std::pair<std::string, MetricsReport>>& rows);
/// Aligned text table with rows AUC, Sensitivity, Specificity, F1, ACC and one column per k.
std::string format_ablation_table(const AblationTable& table);

void to_json(nlohmann::json& j, const SegmentationReport& report);
void to_json(nlohmann::json& j, const Evaluation& evaluation);
void to_json(nlohmann::json& j, const AblationTable& table);

}  // namespace lungcadex::eval
