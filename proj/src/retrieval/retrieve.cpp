#include "lungcadex/retrieval/retrieve.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "lungcadex/errors.hpp"

namespace lungcadex::retrieval {

std::vector<std::size_t> top_k_indices(std::span<const double> scores, int k) {
  if (k < 1) throw ParameterError("k must be at least 1, got " + std::to_string(k));
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(order.size(), std::size_t(k));
  std::partial_sort(order.begin(), order.begin() + std::ptrdiff_t(take), order.end(),
                    [&scores](std::size_t a, std::size_t b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  order.resize(take);
  return order;
}

std::vector<std::vector<float>> embed_gallery(const cadx::AlignedEncoders& encoders,
                                              const gallery::FeatureGallery& gallery) {
  std::vector<std::vector<float>> out;
  out.reserve(gallery.size());
  for (const auto& entry : gallery.entries()) out.push_back(encoders.project_features(entry.features));
  return out;
}

RetrievalResult retrieve_top_k(std::span<const float> query_embedding, const gallery::FeatureGallery& gallery,
                               std::span<const std::vector<float>> gallery_embeddings, int k,
                               std::optional<std::size_t> exclude) {
  if (k < 1) throw ParameterError("k must be at least 1, got " + std::to_string(k));
  if (gallery.empty()) throw InputError("gallery is empty");
  if (gallery_embeddings.size() != gallery.size()) {
    throw ContractError("gallery embeddings do not match the gallery size");
  }
  std::vector<double> scores(gallery.size());
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    const auto& g = gallery_embeddings[i];
    if (g.size() != query_embedding.size()) throw ContractError("embedding dimension mismatch");
    double dot = 0.0;
    for (std::size_t d = 0; d < g.size(); ++d) dot += double(query_embedding[d]) * double(g[d]);
    scores[i] = std::clamp(dot, -1.0, 1.0);
  }
  const bool excluding = exclude && *exclude < scores.size();
  if (excluding) scores[*exclude] = -std::numeric_limits<double>::infinity();
  const int available = static_cast<int>(gallery.size()) - (excluding ? 1 : 0);
  if (available < 1) throw InputError("gallery has no entries left after exclusion");

  RetrievalResult result;
  result.k = k;
  for (std::size_t idx : top_k_indices(scores, std::min(k, available))) {
    const auto& entry = gallery[idx];
    result.hits.push_back({idx, scores[idx], entry.features, entry.label, entry.nodule_id});
  }
  return result;
}

RetrievalResult retrieve_top_k(const ingest::NodulePatch& patch, const gallery::FeatureGallery& gallery,
                               const cadx::AlignedEncoders& encoders, int k) {
  if (k < 1) throw ParameterError("k must be at least 1, got " + std::to_string(k));
  if (gallery.empty()) throw InputError("gallery is empty");
  const auto embeddings = embed_gallery(encoders, gallery);
  RetrievalResult result = retrieve_top_k(encoders.encode_patch(patch), gallery, embeddings, k);
  result.query_id = patch.nodule_id;
  return result;
}

std::string to_string(Aggregation aggregation) {
  return aggregation == Aggregation::mean ? "mean" : "similarity_weighted";
}

Aggregation aggregation_from_string(const std::string& text) {
  if (text == "mean") return Aggregation::mean;
  if (text == "similarity_weighted" || text == "weighted") return Aggregation::similarity_weighted;
  throw ConfigError("unknown aggregation: " + text);
}

gallery::RadiomicFeatureVector aggregate_hits(const RetrievalResult& result, Aggregation aggregation) {
  if (result.hits.empty()) throw ContractError("cannot aggregate an empty retrieval result");
  std::vector<double> weights(result.hits.size(), 1.0);
  if (aggregation == Aggregation::similarity_weighted) {
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) total += weights[i] = std::max(result.hits[i].similarity, 0.0);
    if (!(total > 0.0)) std::fill(weights.begin(), weights.end(), 1.0);
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  gallery::RadiomicFeatureVector out;
  for (std::size_t i = 0; i < result.hits.size(); ++i) {
    for (std::size_t d = 0; d < gallery::kFeatureCount; ++d) out[d] += weights[i] * result.hits[i].features[d];
  }
  for (double& v : out.values) v /= total;
  return out;
}

double LinearClassifier::logit(std::span<const double> x) const {
  if (x.size() != weights.size()) {
    throw ContractError("feature length " + std::to_string(x.size()) + " does not match classifier width " +
                        std::to_string(weights.size()));
  }
  double z = bias;
  for (std::size_t i = 0; i < x.size(); ++i) z += weights[i] * x[i];
  return z;
}

namespace {

double stable_sigmoid(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

double LinearClassifier::probability(std::span<const double> x) const { return stable_sigmoid(logit(x)); }

double LinearClassifier::probability(const gallery::RadiomicFeatureVector& x) const { return probability(x.values); }

Classification classify(std::span<const double> features, const LinearClassifier& clf) {
  Classification c;
  c.probability = clf.probability(features);
  c.cls = c.probability >= clf.threshold ? gallery::MalignancyClass::malignant : gallery::MalignancyClass::benign;
  return c;
}

Classification classify(const gallery::RadiomicFeatureVector& features, const LinearClassifier& clf) {
  return classify(std::span<const double>(features.values), clf);
}

LinearClassifier train_linear(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                              double l2) {
  if (features.empty() || features.size() != labels.size()) {
    throw InputError("classifier needs matching, non-empty feature and label lists");
  }
  if (!(l2 >= 0.0)) throw ParameterError("l2 penalty must be non-negative");
  const std::size_t n = features.size();
  const std::size_t d = features.front().size();
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != d) throw ContractError("feature rows differ in length");
    if (labels[i] != 0 && labels[i] != 1) throw InputError("labels must be 0 or 1");
    positives += std::size_t(labels[i]);
  }
  if (positives == 0 || positives == n) throw TrainingError("classifier training set has a single class");

  // The last column carries the bias.
  const auto rows = Eigen::Index(n);
  const auto cols = Eigen::Index(d + 1);
  Eigen::MatrixXd X(rows, cols);
  Eigen::VectorXd y(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j + 1 < cols; ++j) X(i, j) = features[std::size_t(i)][std::size_t(j)];
    X(i, cols - 1) = 1.0;
    y(i) = labels[std::size_t(i)];
  }
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(cols, l2);
  penalty(cols - 1) = 0.0;
  const double inv_n = 1.0 / double(n);

  auto objective = [&](const Eigen::VectorXd& w) {
    const Eigen::VectorXd z = X * w;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      loss += std::max(z(i), 0.0) + std::log1p(std::exp(-std::abs(z(i)))) - y(i) * z(i);
    }
    return loss * inv_n + 0.5 * (penalty.array() * w.array().square()).sum();
  };

  Eigen::VectorXd w = Eigen::VectorXd::Zero(cols);
  double current = objective(w);
  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::VectorXd z = X * w;
    Eigen::VectorXd p(rows), s(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      p(i) = stable_sigmoid(z(i));
      s(i) = p(i) * (1.0 - p(i));
    }
    const Eigen::VectorXd grad = X.transpose() * (p - y) * inv_n + penalty.cwiseProduct(w);
    if (grad.lpNorm<Eigen::Infinity>() < 1e-12) break;
    Eigen::MatrixXd hessian = X.transpose() * s.asDiagonal() * X * inv_n;
    hessian.diagonal() += penalty + Eigen::VectorXd::Constant(cols, 1e-12);
    const Eigen::VectorXd step = hessian.ldlt().solve(grad);
    double t = 1.0;
    Eigen::VectorXd next = w - step;
    double value = objective(next);
    while (value > current && t > 1e-10) {
      t *= 0.5;
      next = w - t * step;
      value = objective(next);
    }
    if (!(value <= current)) break;
    const bool converged = current - value < 1e-15;
    w = next;
    current = value;
    if (converged) break;
  }
  if (!w.allFinite()) throw TrainingError("classifier fit diverged");

  LinearClassifier clf;
  clf.weights.assign(w.data(), w.data() + d);
  clf.bias = w(cols - 1);
  clf.l2 = l2;
  clf.fitted = true;
  return clf;
}

TrainingSet retrieval_training_set(const cadx::AlignedEncoders& encoders, const gallery::FeatureGallery& gallery,
                                   int k, Aggregation aggregation) {
  if (k < 1) throw ParameterError("k must be at least 1, got " + std::to_string(k));
  if (gallery.size() < 2) throw InputError("classifier training needs at least two gallery entries");
  const auto embeddings = embed_gallery(encoders, gallery);
  TrainingSet set;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    const auto& entry = gallery[i];
    const RetrievalResult hits = retrieve_top_k(encoders.encode_patch(entry.patch), gallery, embeddings, k, i);
    const auto aggregated = aggregate_hits(hits, aggregation);
    set.features.emplace_back(aggregated.values.begin(), aggregated.values.end());
    set.labels.push_back(entry.label.cls == gallery::MalignancyClass::malignant ? 1 : 0);
  }
  return set;
}

LinearClassifier train_classifier(const cadx::AlignedEncoders& encoders, const gallery::FeatureGallery& gallery,
                                  int k, Aggregation aggregation, double l2) {
  const TrainingSet set = retrieval_training_set(encoders, gallery, k, aggregation);
  LinearClassifier clf = train_linear(set.features, set.labels, l2);
  clf.k = k;
  clf.aggregation = aggregation;
  return clf;
}

void save_classifier(const std::filesystem::path& path, const LinearClassifier& clf) {
  const nlohmann::json j = {{"kind", "linear_classifier"},
                            {"weights", clf.weights},
                            {"bias", clf.bias},
                            {"threshold", clf.threshold},
                            {"l2", clf.l2},
                            {"k", clf.k},
                            {"aggregation", to_string(clf.aggregation)},
                            {"fitted", clf.fitted}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

LinearClassifier load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("classifier file not found: " + path.string());
  LinearClassifier clf;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("kind", std::string()) != "linear_classifier") throw ConfigError(path.string() + " is not a classifier");
    clf.weights = j.at("weights").get<std::vector<double>>();
    clf.bias = j.at("bias").get<double>();
    clf.threshold = j.value("threshold", 0.5);
    clf.l2 = j.value("l2", 1e-3);
    clf.k = j.value("k", kDefaultK);
    clf.aggregation = aggregation_from_string(j.value("aggregation", std::string("mean")));
    clf.fitted = j.value("fitted", true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": bad classifier file: " + e.what());
  }
  if (clf.weights.size() != gallery::kFeatureCount) throw ConfigError(path.string() + ": classifier width is not 8");
  return clf;
}

}  // namespace lungcadex::retrieval
