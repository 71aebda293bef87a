#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lungcadex/cadx/align.hpp"
#include "lungcadex/gallery/gallery.hpp"

namespace lungcadex::retrieval {

inline constexpr int kDefaultK = 5;

struct RetrievalHit {
  std::size_t index = 0;  // position in the gallery
  double similarity = 0.0;
  gallery::RadiomicFeatureVector features;
  gallery::MalignancyLabel label;
  std::string nodule_id;
};

struct RetrievalResult {
  std::string query_id;
  int k = 0;
  std::vector<RetrievalHit> hits;  // similarity descending, ties by lower index
};

/// Indices of the k largest scores, descending, ties broken by lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> scores, int k);

/// Joint embeddings of every gallery entry's radiomic vector, in gallery order.
std::vector<std::vector<float>> embed_gallery(const cadx::AlignedEncoders& encoders,
                                              const gallery::FeatureGallery& gallery);

/// Exact top-k by cosine similarity against precomputed gallery embeddings. An
/// excluded index (the query's own entry) is skipped.
RetrievalResult retrieve_top_k(std::span<const float> query_embedding, const gallery::FeatureGallery& gallery,
                               std::span<const std::vector<float>> gallery_embeddings, int k,
                               std::optional<std::size_t> exclude = std::nullopt);

RetrievalResult retrieve_top_k(const ingest::NodulePatch& patch, const gallery::FeatureGallery& gallery,
                               const cadx::AlignedEncoders& encoders, int k);

enum class Aggregation { mean, similarity_weighted };

std::string to_string(Aggregation aggregation);
Aggregation aggregation_from_string(const std::string& text);

/// Componentwise mean of the hit vectors. The weighted form uses max(similarity, 0)
/// as weights and falls back to the mean when they all vanish.
gallery::RadiomicFeatureVector aggregate_hits(const RetrievalResult& result,
                                              Aggregation aggregation = Aggregation::mean);

struct LinearClassifier {
  std::vector<double> weights;  // one per radiomic attribute
  double bias = 0.0;
  double threshold = 0.5;
  double l2 = 1e-3;
  int k = kDefaultK;
  Aggregation aggregation = Aggregation::mean;
  bool fitted = false;

  double logit(std::span<const double> x) const;
  double probability(std::span<const double> x) const;
  double probability(const gallery::RadiomicFeatureVector& x) const;
};

struct Classification {
  double probability = 0.0;
  gallery::MalignancyClass cls = gallery::MalignancyClass::benign;
};

Classification classify(const gallery::RadiomicFeatureVector& features, const LinearClassifier& clf);
Classification classify(std::span<const double> features, const LinearClassifier& clf);

/// L2-penalized logistic regression (bias unpenalized), fit by Newton's method on
/// mean log-loss + (l2 / 2) * |w|^2. Labels are 1 for malignant, 0 for benign.
LinearClassifier train_linear(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                              double l2 = 1e-3);

/// Aggregated top-k features for every gallery entry, each retrieved against the rest.
struct TrainingSet {
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
};
TrainingSet retrieval_training_set(const cadx::AlignedEncoders& encoders, const gallery::FeatureGallery& gallery,
                                   int k, Aggregation aggregation = Aggregation::mean);

/// Trains on aggregated retrieved features of the training gallery (self-retrieval excluded).
LinearClassifier train_classifier(const cadx::AlignedEncoders& encoders, const gallery::FeatureGallery& gallery,
                                  int k = kDefaultK, Aggregation aggregation = Aggregation::mean,
                                  double l2 = 1e-3);

void save_classifier(const std::filesystem::path& path, const LinearClassifier& clf);
LinearClassifier load_classifier(const std::filesystem::path& path);

}  // namespace lungcadex::retrieval
