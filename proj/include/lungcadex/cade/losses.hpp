#pragma once

#include <span>
#include <vector>

#include "lungcadex/nn/autograd.hpp"

namespace lungcadex::cade {

/// Probabilities are clamped to [eps, 1 - eps] before taking logarithms.
inline constexpr double kProbabilityClamp = 1e-7;
/// Added to numerator and denominator of the soft Dice ratio.
inline constexpr double kDiceSmoothing = 1e-6;

struct LossWithGradient {
  double value = 0.0;
  std::vector<double> gradient;  // d loss / d prediction, same length as the prediction
};

/// Mean binary cross-entropy between predicted probabilities and a binary target.
double bce_loss(std::span<const double> prediction, std::span<const double> target,
                double eps = kProbabilityClamp);
LossWithGradient bce_loss_with_gradient(std::span<const double> prediction, std::span<const double> target,
                                        double eps = kProbabilityClamp);

/// 1 - (2 sum(g s) + d) / (sum(g^2) + sum(s^2) + d)
double dice_loss(std::span<const double> prediction, std::span<const double> target,
                 double smoothing = kDiceSmoothing);
LossWithGradient dice_loss_with_gradient(std::span<const double> prediction, std::span<const double> target,
                                         double smoothing = kDiceSmoothing);

/// Unweighted sum of the two terms above.
double combined_loss(std::span<const double> prediction, std::span<const double> target);
LossWithGradient combined_loss_with_gradient(std::span<const double> prediction, std::span<const double> target);

struct SegmentationLossTerms {
  double bce = 0.0;
  double dice = 0.0;
  double total = 0.0;
};

/// Graph node computing combined_loss on a probability map. Terms are reported
/// through the optional out-parameter for logging.
nn::Var segmentation_loss(const nn::Var& probabilities, std::span<const double> target,
                          SegmentationLossTerms* terms = nullptr);

}  // namespace lungcadex::cade
