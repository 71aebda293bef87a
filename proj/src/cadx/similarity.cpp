#include "lungcadex/cadx/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "lungcadex/errors.hpp"

namespace lungcadex::cadx {

SimilarityMatrix similarity_matrix(std::span<const std::vector<float>> image_embeddings,
                                   std::span<const std::vector<float>> feature_embeddings) {
  SimilarityMatrix sim;
  sim.rows = static_cast<int>(image_embeddings.size());
  sim.cols = static_cast<int>(feature_embeddings.size());
  sim.values.resize(std::size_t(sim.rows) * sim.cols);
  for (int i = 0; i < sim.rows; ++i) {
    const auto& a = image_embeddings[i];
    for (int j = 0; j < sim.cols; ++j) {
      const auto& b = feature_embeddings[j];
      if (a.size() != b.size()) throw ContractError("similarity_matrix: embedding dimensions differ");
      double dot = 0.0;
      for (std::size_t d = 0; d < a.size(); ++d) dot += double(a[d]) * b[d];
      sim.at(i, j) = std::clamp(dot, -1.0, 1.0);
    }
  }
  return sim;
}

void validate(const SceOptions& options) {
  if (!(options.temperature > 0.0)) throw ParameterError("SCE temperature must be positive");
  if (options.alpha < 0.0 || options.beta < 0.0 || !(options.alpha + options.beta > 0.0)) {
    throw ParameterError("SCE weights must be non-negative with a positive sum");
  }
}

namespace {

/// One direction of the loss: rows of `logits` are softmaxed, target is the diagonal.
/// Adds d(ce)/d(logits) and d(rce)/d(logits), already divided by n, into the grads.
void directional(const std::vector<double>& logits, int n, double clamp_magnitude, double& ce, double& rce,
                 std::vector<double>& dce, std::vector<double>& drce) {
  std::vector<double> p(n);
  for (int i = 0; i < n; ++i) {
    const double* z = logits.data() + std::size_t(i) * n;
    const double peak = *std::max_element(z, z + n);
    double total = 0.0;
    for (int j = 0; j < n; ++j) total += std::exp(z[j] - peak);
    const double lse = peak + std::log(total);
    for (int j = 0; j < n; ++j) p[j] = std::exp(z[j] - lse);
    ce += (lse - z[i]) / n;
    // Off-diagonal targets are 0, whose log is replaced by the clamp; the diagonal contributes log 1 = 0.
    rce += clamp_magnitude * (1.0 - p[i]) / n;
    for (int j = 0; j < n; ++j) {
      const double delta = (i == j) ? 1.0 : 0.0;
      dce[std::size_t(i) * n + j] += (p[j] - delta) / n;
      drce[std::size_t(i) * n + j] += -clamp_magnitude * p[i] * (delta - p[j]) / n;
    }
  }
}

}  // namespace

SceWithGradient sce_loss_with_gradient(const SimilarityMatrix& sim, const SceOptions& options) {
  validate(options);
  if (sim.rows != sim.cols || sim.rows == 0) throw ContractError("sce_loss needs a non-empty square matrix");
  const int n = sim.rows;
  const double clamp_magnitude = -options.log_zero_clamp;
  const std::size_t nn = std::size_t(n) * n;

  std::vector<double> row_logits(nn), col_logits(nn);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      row_logits[std::size_t(i) * n + j] = sim.at(i, j) / options.temperature;
      col_logits[std::size_t(j) * n + i] = sim.at(i, j) / options.temperature;
    }
  }
  double ce_rows = 0, rce_rows = 0, ce_cols = 0, rce_cols = 0;
  std::vector<double> dce_rows(nn), drce_rows(nn), dce_cols(nn), drce_cols(nn);
  directional(row_logits, n, clamp_magnitude, ce_rows, rce_rows, dce_rows, drce_rows);
  directional(col_logits, n, clamp_magnitude, ce_cols, rce_cols, dce_cols, drce_cols);

  SceWithGradient out;
  out.terms.ce = 0.5 * (ce_rows + ce_cols);
  out.terms.rce = 0.5 * (rce_rows + rce_cols);
  out.terms.total = options.alpha * out.terms.ce + options.beta * out.terms.rce;
  out.gradient.resize(nn);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const std::size_t rij = std::size_t(i) * n + j;
      const std::size_t cji = std::size_t(j) * n + i;
      const double d_ce = 0.5 * (dce_rows[rij] + dce_cols[cji]);
      const double d_rce = 0.5 * (drce_rows[rij] + drce_cols[cji]);
      out.gradient[rij] = (options.alpha * d_ce + options.beta * d_rce) / options.temperature;
    }
  }
  return out;
}

SceTerms sce_loss_terms(const SimilarityMatrix& sim, const SceOptions& options) {
  return sce_loss_with_gradient(sim, options).terms;
}

double sce_loss(const SimilarityMatrix& sim, const SceOptions& options) { return sce_loss_terms(sim, options).total; }

nn::Var sce_loss(const nn::Var& similarity, const SceOptions& options, SceTerms* terms) {
  const nn::Tensor& t = similarity.value();
  if (t.rank() != 2) throw ContractError("sce_loss expects a matrix");
  SimilarityMatrix sim{t.rows(), t.cols(), std::vector<double>(t.data.begin(), t.data.end())};
  const SceWithGradient result = sce_loss_with_gradient(sim, options);
  if (terms) *terms = result.terms;
  auto gradient = std::make_shared<std::vector<double>>(result.gradient);
  nn::Tensor value({1}, {static_cast<float>(result.terms.total)});
  return nn::Var::make(std::move(value), {similarity}, [gradient](nn::Node& node) {
    nn::Node& input = *node.inputs[0];
    if (!input.requires_grad) return;
    nn::Tensor& g = input.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<float>(node.grad[0] * (*gradient)[i]);
  });
}

}  // namespace lungcadex::cadx
