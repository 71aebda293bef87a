#pragma once

#include <vector>

#include "lungcadex/nn/parameters.hpp"

namespace lungcadex::nn {

struct AdamWOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Moments are kept per parameter entry;
/// frozen entries are skipped and never modified.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParameterStore& store, AdamWOptions options);

  /// Applies one update using the accumulated gradients multiplied by grad_scale,
  /// then clears the gradients.
  void step(ParameterStore& store, double grad_scale = 1.0);

  long steps() const { return steps_; }
  const AdamWOptions& options() const { return options_; }

 private:
  AdamWOptions options_;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
  long steps_ = 0;
};

}  // namespace lungcadex::nn
