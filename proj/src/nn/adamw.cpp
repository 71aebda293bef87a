#include "lungcadex/nn/adamw.hpp"

#include <cmath>

#include "lungcadex/errors.hpp"

namespace lungcadex::nn {

AdamW::AdamW(const ParameterStore& store, AdamWOptions options) : options_(options) {
  for (const auto& e : store.entries()) {
    first_moment_.emplace_back(e.var.value().shape);
    second_moment_.emplace_back(e.var.value().shape);
  }
}

void AdamW::step(ParameterStore& store, double grad_scale) {
  auto& entries = store.entries();
  if (entries.size() != first_moment_.size()) throw ContractError("AdamW: parameter store changed size");
  ++steps_;
  const double correction1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& e = entries[p];
    if (!e.trainable) continue;
    const Tensor& grad = e.var.grad();
    if (grad.size() == 0) continue;
    Tensor& value = e.var.mutable_value();
    Tensor& m = first_moment_[p];
    Tensor& v = second_moment_[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] * grad_scale;
      m[i] = static_cast<float>(options_.beta1 * m[i] + (1.0 - options_.beta1) * g);
      v[i] = static_cast<float>(options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g);
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      const double update = m_hat / (std::sqrt(v_hat) + options_.epsilon) + options_.weight_decay * value[i];
      value[i] = static_cast<float>(value[i] - options_.learning_rate * update);
    }
  }
  store.zero_grad();
}

}  // namespace lungcadex::nn
