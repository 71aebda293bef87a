#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lungcadex/nn/tensor.hpp"

namespace lungcadex::nn {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Gradient buffer, allocated on first use.
  Tensor& grad_buffer();
};

/// Handle to a value in the computation graph. Copies share the node.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  static Var parameter(Tensor value);
  /// Output of an op; requires_grad is inherited from the inputs.
  static Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  /// Accumulated gradient; empty until backward reaches this node.
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  /// Reverse pass from a scalar output, seeded with 1.
  void backward() const;

  Node* node() const { return node_.get(); }

 private:
  std::shared_ptr<Node> node_;
};

}  // namespace lungcadex::nn
