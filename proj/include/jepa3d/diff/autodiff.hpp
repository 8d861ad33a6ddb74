#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "jepa3d/diff/tensor.hpp"

namespace jepa3d {

template <class T>
struct Node {
  using BackwardFn = std::function<void(Node&)>;

  Tensor<T> value;
  Tensor<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward_fn;

  bool is_leaf() const { return !backward_fn; }

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }

  void accumulate(std::span<const T> g) {
    auto& buf = grad_buffer();
    T* dst = buf.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
};

// Process-wide switch for graph recording. Off inside a NoGradGuard.
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Handle to a node in the recorded computation. Copies share the node.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return static_cast<bool>(node_); }

  const Tensor<T>& value() const { return node_->value; }
  // Direct access for optimizers, EMA and checkpoint loading; never used on recorded nodes.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(long axis) const { return node_->value.dim(axis); }
  std::size_t rank() const { return node_->value.rank(); }
  std::size_t size() const { return node_->value.size(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor<T>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor<T>(); }

  const char* op() const { return node_->op; }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared_node() const { return node_; }

  Var detach() const { return Var(node_->value, false); }

  // Reverse-mode pass from a one-element loss. Leaf gradients accumulate
  // across calls; intermediate gradients are recomputed every call.
  void backward() const {
    if (node_->value.size() != 1)
      throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(node_->value.shape()));
    if (!node_->requires_grad) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->inputs.size()) {
        Node<T>* child = n->inputs[next++].get();
        if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }

    for (auto* n : order)
      if (!n->is_leaf()) n->grad = Tensor<T>();
    node_->grad_buffer()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (!n->is_leaf() && !n->grad.empty()) n->backward_fn(*n);
    }
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Wraps a computed value as a graph node. When no input requires a gradient
// (or recording is disabled) the result is a constant with no history.
template <class T>
Var<T> record(const char* op, Tensor<T> value, std::vector<Var<T>> inputs, typename Node<T>::BackwardFn fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  bool any = false;
  if (grad_enabled())
    for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.shared_node());
    node->backward_fn = std::move(fn);
  }
  return Var<T>(std::move(node));
}

}  // namespace jepa3d
