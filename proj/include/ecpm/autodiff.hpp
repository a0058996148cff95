#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ecpm/tensor.hpp"

namespace ecpm {

template <typename T>
struct Node;

// Recorded op. `backward` reads self.grad and accumulates into parents.
template <typename T>
struct Node {
  const char* kind = "leaf";
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const noexcept { return parents.empty(); }

  void accumulate(const Tensor<T>& g) {
    if (!requires_grad) return;
    if (grad.empty()) {
      grad = g;
      return;
    }
    auto dst = grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  // Lazily-allocated gradient buffer for ops that scatter into a parent.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

// Disables graph recording on the current thread (inference, EMA, optimizer).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled_flag()) {
    detail::grad_enabled_flag() = false;
  }
  ~NoGradGuard() { detail::grad_enabled_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Shared handle to a graph node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const char* kind() const { return node_->kind; }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  T item() const { return node_->value.item(); }

  void zero_grad() {
    if (node_) node_->grad = Tensor<T>();
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
Var<T> parameter(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->kind = "param";
  n->value = std::move(value);
  n->requires_grad = true;
  return Var<T>(std::move(n));
}

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->kind = "const";
  n->value = std::move(value);
  return Var<T>(std::move(n));
}

// Builds an op node. The backward rule is only attached (and parents only
// retained) when recording is enabled and some input requires grad.
template <typename T, typename Backward>
Var<T> make_op(const char* kind, Tensor<T> value,
               std::vector<Var<T>> inputs, Backward&& backward) {
  auto n = std::make_shared<Node<T>>();
  n->kind = kind;
  n->value = std::move(value);
  bool any = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) any = any || in.requires_grad();
  }
  if (any) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (auto& in : inputs) n->parents.push_back(in.node_ptr());
    n->backward = std::forward<Backward>(backward);
  }
  return Var<T>(std::move(n));
}

namespace detail {

// Reverse topological order (output first), each node exactly once.
template <typename T>
std::vector<Node<T>*> reverse_topo(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

}  // namespace detail

// Backpropagates `seed` (same shape as out) through the graph. Interior node
// gradients are reset on every call; leaf gradients accumulate.
template <typename T>
void backward_seeded(const Var<T>& out, const Tensor<T>& seed) {
  if (!out.requires_grad()) return;
  if (seed.shape() != out.shape()) {
    throw Error("backward: seed shape " + shape_str(seed.shape()) +
                " != output shape " + shape_str(out.shape()));
  }
  auto order = detail::reverse_topo(out.node());
  for (Node<T>* n : order) {
    if (!n->is_leaf()) n->grad = Tensor<T>();
  }
  out.node()->accumulate(seed);
  for (Node<T>* n : order) {
    if (n->is_leaf() || n->grad.empty() || !n->backward) continue;
    n->backward(*n);
  }
}

template <typename T>
void backward(const Var<T>& loss) {
  if (loss.size() != 1) {
    throw Error("backward: loss must be scalar, got shape " +
                shape_str(loss.shape()));
  }
  backward_seeded(loss, Tensor<T>(loss.shape(), T{1}));
}

}  // namespace ecpm
