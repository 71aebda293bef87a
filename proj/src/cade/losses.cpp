#include "lungcadex/cade/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "lungcadex/errors.hpp"

namespace lungcadex::cade {
namespace {

void check_shapes(std::span<const double> prediction, std::span<const double> target) {
  if (prediction.size() != target.size()) {
    throw ContractError("segmentation loss: prediction has " + std::to_string(prediction.size()) +
                        " values, target has " + std::to_string(target.size()));
  }
  if (prediction.empty()) throw ContractError("segmentation loss: empty prediction");
}

}  // namespace

double bce_loss(std::span<const double> prediction, std::span<const double> target, double eps) {
  return bce_loss_with_gradient(prediction, target, eps).value;
}

LossWithGradient bce_loss_with_gradient(std::span<const double> prediction, std::span<const double> target,
                                        double eps) {
  check_shapes(prediction, target);
  const double n = static_cast<double>(prediction.size());
  LossWithGradient out;
  out.gradient.resize(prediction.size());
  double total = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double raw = prediction[i];
    const double s = std::clamp(raw, eps, 1.0 - eps);
    const double g = target[i];
    total += g * std::log(s) + (1.0 - g) * std::log(1.0 - s);
    // The clamp has zero slope outside the open interval.
    const bool inside = raw > eps && raw < 1.0 - eps;
    out.gradient[i] = inside ? -(g / s - (1.0 - g) / (1.0 - s)) / n : 0.0;
  }
  out.value = -total / n;
  return out;
}

double dice_loss(std::span<const double> prediction, std::span<const double> target, double smoothing) {
  return dice_loss_with_gradient(prediction, target, smoothing).value;
}

LossWithGradient dice_loss_with_gradient(std::span<const double> prediction, std::span<const double> target,
                                         double smoothing) {
  check_shapes(prediction, target);
  double overlap = 0.0, target_sq = 0.0, pred_sq = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    overlap += target[i] * prediction[i];
    target_sq += target[i] * target[i];
    pred_sq += prediction[i] * prediction[i];
  }
  const double numerator = 2.0 * overlap + smoothing;
  const double denominator = target_sq + pred_sq + smoothing;
  LossWithGradient out;
  out.value = 1.0 - numerator / denominator;
  out.gradient.resize(prediction.size());
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    out.gradient[i] = -(2.0 * target[i] * denominator - numerator * 2.0 * prediction[i]) / (denominator * denominator);
  }
  return out;
}

double combined_loss(std::span<const double> prediction, std::span<const double> target) {
  return bce_loss(prediction, target) + dice_loss(prediction, target);
}

LossWithGradient combined_loss_with_gradient(std::span<const double> prediction, std::span<const double> target) {
  LossWithGradient bce = bce_loss_with_gradient(prediction, target);
  const LossWithGradient dice = dice_loss_with_gradient(prediction, target);
  bce.value += dice.value;
  for (std::size_t i = 0; i < bce.gradient.size(); ++i) bce.gradient[i] += dice.gradient[i];
  return bce;
}

nn::Var segmentation_loss(const nn::Var& probabilities, std::span<const double> target,
                          SegmentationLossTerms* terms) {
  const nn::Tensor& p = probabilities.value();
  std::vector<double> prediction(p.data.begin(), p.data.end());
  const LossWithGradient bce = bce_loss_with_gradient(prediction, target);
  const LossWithGradient dice = dice_loss_with_gradient(prediction, target);
  if (terms) *terms = {bce.value, dice.value, bce.value + dice.value};
  auto gradient = std::make_shared<std::vector<double>>(bce.gradient);
  for (std::size_t i = 0; i < gradient->size(); ++i) (*gradient)[i] += dice.gradient[i];
  nn::Tensor value({1}, {static_cast<float>(bce.value + dice.value)});
  return nn::Var::make(std::move(value), {probabilities}, [gradient](nn::Node& node) {
    nn::Node& input = *node.inputs[0];
    if (!input.requires_grad) return;
    nn::Tensor& g = input.grad_buffer();
    const double upstream = node.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<float>(upstream * (*gradient)[i]);
  });
}

}  // namespace lungcadex::cade
