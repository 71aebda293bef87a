#pragma once

#include <span>
#include <vector>

#include "lungcadex/nn/autograd.hpp"

namespace lungcadex::cadx {

/// Cosine similarities: rows index image embeddings, columns index feature embeddings.
struct SimilarityMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  double at(int r, int c) const { return values[std::size_t(r) * cols + c]; }
  double& at(int r, int c) { return values[std::size_t(r) * cols + c]; }
};

/// Entry (i, j) = dot(image_i, feature_j). Inputs must be unit-norm vectors of equal length.
SimilarityMatrix similarity_matrix(std::span<const std::vector<float>> image_embeddings,
                                   std::span<const std::vector<float>> feature_embeddings);

struct SceOptions {
  double temperature = 0.07;
  double alpha = 1.0;  ///< weight of the cross-entropy term
  double beta = 1.0;   ///< weight of the reverse cross-entropy term
  double log_zero_clamp = -4.0;  ///< value substituted for log(0) of the one-hot target
};

struct SceTerms {
  double ce = 0.0;
  double rce = 0.0;
  double total = 0.0;
};

struct SceWithGradient {
  SceTerms terms;
  std::vector<double> gradient;  // d total / d similarity, row-major like the matrix
};

/// Symmetric cross-entropy over a square similarity matrix whose diagonal holds the
/// matched pairs. Both terms are averaged over rows and over columns, then the two
/// directions are averaged.
SceTerms sce_loss_terms(const SimilarityMatrix& sim, const SceOptions& options = {});
double sce_loss(const SimilarityMatrix& sim, const SceOptions& options = {});
SceWithGradient sce_loss_with_gradient(const SimilarityMatrix& sim, const SceOptions& options = {});

void validate(const SceOptions& options);

/// Graph node over a {n, n} similarity tensor.
nn::Var sce_loss(const nn::Var& similarity, const SceOptions& options, SceTerms* terms = nullptr);

}  // namespace lungcadex::cadx
