#include "lungcadex/nn/autograd.hpp"

#include <sstream>
#include <unordered_set>

#include "lungcadex/errors.hpp"

namespace lungcadex::nn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape s, std::vector<float> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_size(shape)) throw ContractError("tensor data does not match shape " + shape_string(shape));
}

Tensor& Node::grad_buffer() {
  if (grad.shape != value.shape) grad = Tensor(value.shape);
  return grad;
}

Var Var::constant(Tensor value) {
  Var v;
  v.node_ = std::make_shared<Node>();
  v.node_->value = std::move(value);
  return v;
}

Var Var::parameter(Tensor value) {
  Var v = constant(std::move(value));
  v.node_->requires_grad = true;
  return v;
}

Var Var::make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  Var v;
  v.node_ = std::make_shared<Node>();
  v.node_->value = std::move(value);
  for (const Var& in : inputs) {
    if (in.requires_grad()) v.node_->requires_grad = true;
  }
  if (v.node_->requires_grad) {
    v.node_->inputs.reserve(inputs.size());
    for (Var& in : inputs) v.node_->inputs.push_back(std::move(in.node_));
    v.node_->backward = std::move(backward);
  }
  return v;
}

void Var::backward() const {
  if (!node_ || !node_->requires_grad) return;
  if (node_->value.size() != 1) throw ContractError("backward() needs a scalar output");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer().data[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.shape == node->value.shape) node->backward(*node);
  }
  // Intermediate gradients are not needed after the pass; leaves keep theirs.
  for (Node* node : order) {
    if (!node->inputs.empty()) node->grad = Tensor();
  }
}

}  // namespace lungcadex::nn
