#include "lungcadex/eval/evaluate.hpp"

#include <iomanip>
#include <sstream>

#include "lungcadex/cade/train.hpp"
#include "lungcadex/errors.hpp"
#include "lungcadex/parallel.hpp"

namespace lungcadex::eval {

std::string to_string(EvalMode mode) {
  return mode == EvalMode::ground_truth_patches ? "ground_truth_patches" : "automatic";
}

namespace {

void check_test_set(const gallery::FeatureGallery& test) {
  if (test.empty()) throw InputError("test set is empty");
  for (const auto& entry : test.entries()) {
    if (entry.label.cls == gallery::MalignancyClass::excluded) {
      throw ValidationError("excluded nodule " + entry.nodule_id + " reached the evaluation set");
    }
  }
}

int label_of(const gallery::GalleryEntry& entry) {
  return entry.label.cls == gallery::MalignancyClass::malignant ? 1 : 0;
}

std::vector<std::vector<float>> query_embeddings(const gallery::FeatureGallery& test,
                                                 const cadx::AlignedEncoders& encoders, int threads) {
  std::vector<std::vector<float>> out(test.size());
  parallel_for(test.size(), threads, [&](std::size_t i) { out[i] = encoders.encode_patch(test[i].patch); });
  return out;
}

Evaluation score_queries(const gallery::FeatureGallery& test, const std::vector<std::vector<float>>& queries,
                         const gallery::FeatureGallery& train, const std::vector<std::vector<float>>& train_embeddings,
                         const retrieval::LinearClassifier& classifier, int k, int threads) {
  if (k < 1) throw ParameterError("k must be at least 1, got " + std::to_string(k));
  Evaluation ev;
  ev.mode = EvalMode::ground_truth_patches;
  ev.k = k;
  ev.samples.resize(test.size());
  parallel_for(test.size(), threads, [&](std::size_t i) {
    const auto hits = retrieval::retrieve_top_k(queries[i], train, train_embeddings, k);
    const auto cls = retrieval::classify(retrieval::aggregate_hits(hits, classifier.aggregation), classifier);
    ev.samples[i] = {test[i].scan_id, test[i].nodule_id, label_of(test[i]), cls.probability, true, 1.0};
  });
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : ev.samples) {
    scores.push_back(s.score);
    labels.push_back(s.label);
  }
  ev.report = metrics_report(scores, labels, classifier.threshold);
  return ev;
}

void check_trained(const cadx::AlignedEncoders& encoders, const retrieval::LinearClassifier& classifier) {
  if (!encoders.trained()) throw StateError("alignment stage is untrained");
  if (!classifier.fitted) throw StateError("classifier is untrained");
}

}  // namespace

Evaluation evaluate(const gallery::FeatureGallery& test, const cadx::AlignedEncoders& encoders,
                    const gallery::FeatureGallery& train, const retrieval::LinearClassifier& classifier, int k,
                    int threads) {
  check_test_set(test);
  check_trained(encoders, classifier);
  if (k < 1) throw ParameterError("k must be at least 1, got " + std::to_string(k));
  if (train.empty()) throw InputError("training gallery is empty");
  return score_queries(test, query_embeddings(test, encoders, threads), train,
                       retrieval::embed_gallery(encoders, train), classifier, k, threads);
}

Evaluation evaluate_automatic(const ingest::Dataset& dataset, const gallery::FeatureGallery& test,
                              const retrieval::DiagnosisPipeline& pipeline, const retrieval::DiagnoseOptions& options) {
  check_test_set(test);
  Evaluation ev;
  ev.mode = EvalMode::automatic;
  ev.k = options.k;
  ev.samples.resize(test.size());
  retrieval::DiagnoseOptions inner = options;
  inner.threads = 1;
  parallel_for(test.size(), options.threads, [&](std::size_t i) {
    const auto& entry = test[i];
    const ingest::SliceImage slice = cade::load_slice(dataset, entry.scan_id, entry.patch.slice_index);
    const auto diagnoses = pipeline.diagnose_slice(slice, inner);
    SampleScore s{entry.scan_id, entry.nodule_id, label_of(entry), 0.0, false, 0.0};
    for (const auto& d : diagnoses) {
      const double overlap = iou(d.bbox, entry.bbox);
      if (overlap > s.iou) {
        s.iou = overlap;
        s.score = d.probability;
        s.detected = true;
      }
    }
    ev.samples[i] = s;
  });
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : ev.samples) {
    scores.push_back(s.score);
    labels.push_back(s.label);
  }
  ev.report = metrics_report(scores, labels, pipeline.classifier().threshold);
  return ev;
}

SegmentationReport evaluate_segmentation(const ingest::Dataset& dataset, const std::set<std::string>& scan_ids,
                                         const cade::SegModel& model, const std::string& prompt, double threshold,
                                         int threads) {
  struct SliceRef {
    std::string scan_id;
    int slice_index;
  };
  std::vector<SliceRef> refs;
  for (const std::string& scan_id : scan_ids) {
    std::set<int> contoured;
    for (const auto& nodule : dataset.scan(scan_id).nodules) {
      for (const auto& c : nodule.contours) contoured.insert(c.slice_index);
    }
    for (int z : contoured) refs.push_back({scan_id, z});
  }
  if (refs.empty()) throw InputError("no contoured slices to evaluate");

  struct Counts {
    double intersection = 0.0, predicted = 0.0, truth = 0.0;
  };
  std::vector<Counts> counts(refs.size());
  parallel_for(refs.size(), threads, [&](std::size_t i) {
    const ingest::SliceImage slice = cade::load_slice(dataset, refs[i].scan_id, refs[i].slice_index);
    const Mask predicted = cade::binarize(cade::predict_mask(model, slice, prompt).probabilities, threshold);
    const Mask truth = dataset.slice_mask(refs[i].scan_id, refs[i].slice_index);
    Counts c;
    for (std::size_t p = 0; p < truth.bits.size(); ++p) {
      c.intersection += double(predicted.bits[p] && truth.bits[p]);
      c.predicted += predicted.bits[p];
      c.truth += truth.bits[p];
    }
    counts[i] = c;
  });
  SegmentationReport r;
  r.n_slices = refs.size();
  r.threshold = threshold;
  r.prompt = prompt;
  Counts total;
  for (const Counts& c : counts) {
    total.intersection += c.intersection;
    total.predicted += c.predicted;
    total.truth += c.truth;
    r.mean_dice += 2.0 * c.intersection / (c.predicted + c.truth);
  }
  r.mean_dice /= double(counts.size());
  r.pooled_dice = 2.0 * total.intersection / (total.predicted + total.truth);
  return r;
}

AblationTable ablate_k(const gallery::FeatureGallery& test, const cadx::AlignedEncoders& encoders,
                       const gallery::FeatureGallery& train, const retrieval::LinearClassifier& classifier,
                       const AblationOptions& options) {
  if (options.k_min < 1 || options.k_max < options.k_min) {
    throw ParameterError("k range [" + std::to_string(options.k_min) + ", " + std::to_string(options.k_max) +
                         "] is empty");
  }
  check_test_set(test);
  if (!encoders.trained()) throw StateError("alignment stage is untrained");
  if (!options.retrain_classifier && !classifier.fitted) throw StateError("classifier is untrained");
  const auto queries = query_embeddings(test, encoders, options.threads);
  const auto train_embeddings = retrieval::embed_gallery(encoders, train);

  AblationTable table;
  table.retrained = options.retrain_classifier;
  for (int k = options.k_min; k <= options.k_max; ++k) {
    retrieval::LinearClassifier clf = classifier;
    if (options.retrain_classifier) {
      clf = retrieval::train_classifier(encoders, train, k, options.aggregation, options.l2);
      clf.threshold = classifier.threshold;
    }
    table.ks.push_back(k);
    table.reports.push_back(score_queries(test, queries, train, train_embeddings, clf, k, options.threads).report);
  }
  return table;
}

namespace {

std::string fixed(const std::optional<double>& v, int decimals, double scale = 1.0) {
  if (!v) return "-";
  std::ostringstream out;
  out << std::fixed << std::setprecision(decimals) << *v * scale;
  return out.str();
}

std::string render(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> widths;
  for (const auto& row : cells) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      if (c > 0) out << " | ";
      if (c == 0) {
        out << std::left << std::setw(int(widths[c])) << cells[r][c];
      } else {
        out << std::right << std::setw(int(widths[c])) << cells[r][c];
      }
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : widths) total += w;
      out << std::string(total + 3 * (widths.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

}  // namespace

std::string format_metrics_table(const std::string& title,
                                 const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::vector<std::vector<std::string>> cells{{"Network", "AUC", "Accuracy", "Sensitivity", "Specificity"}};
  for (const auto& [name, r] : rows) {
    cells.push_back({name, fixed(r.auc, 3), fixed(r.accuracy, 3), fixed(r.sensitivity, 3), fixed(r.specificity, 3)});
  }
  return title + "\n" + render(cells);
}

std::string format_ablation_table(const AblationTable& table) {
  std::vector<std::vector<std::string>> cells{{"k"}};
  for (int k : table.ks) cells[0].push_back(std::to_string(k));
  const std::pair<const char*, std::optional<double> MetricsReport::*> rows[] = {
      {"AUC", &MetricsReport::auc},
      {"Sensitivity", &MetricsReport::sensitivity},
      {"Specificity", &MetricsReport::specificity},
      {"F1", &MetricsReport::f1},
      {"ACC", &MetricsReport::accuracy}};
  for (const auto& [name, member] : rows) {
    std::vector<std::string> row{name};
    const bool is_auc = member == &MetricsReport::auc;
    for (const MetricsReport& r : table.reports) row.push_back(is_auc ? fixed(r.*member, 3) : fixed(r.*member, 2, 100.0));
    cells.push_back(std::move(row));
  }
  return "Number of learning examples (k)\n" + render(cells);
}

void to_json(nlohmann::json& j, const SegmentationReport& r) {
  j = {{"pooled_dice", r.pooled_dice},
       {"mean_dice", r.mean_dice},
       {"n_slices", r.n_slices},
       {"threshold", r.threshold},
       {"prompt", r.prompt}};
}

void to_json(nlohmann::json& j, const Evaluation& ev) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : ev.samples) {
    samples.push_back({{"scan_id", s.scan_id},
                       {"nodule_id", s.nodule_id},
                       {"label", s.label},
                       {"score", s.score},
                       {"detected", s.detected},
                       {"iou", s.iou}});
  }
  j = {{"mode", to_string(ev.mode)}, {"k", ev.k}, {"metrics", ev.report}, {"samples", std::move(samples)}};
}

void to_json(nlohmann::json& j, const AblationTable& t) {
  nlohmann::json columns = nlohmann::json::array();
  for (std::size_t i = 0; i < t.ks.size(); ++i) columns.push_back({{"k", t.ks[i]}, {"metrics", t.reports[i]}});
  j = {{"retrained_classifier", t.retrained},
       {"rows", {"AUC", "Sensitivity", "Specificity", "F1", "ACC"}},
       {"columns", std::move(columns)}};
}

}  // namespace lungcadex::eval
