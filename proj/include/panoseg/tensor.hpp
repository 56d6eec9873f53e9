#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "panoseg/error.hpp"

namespace panoseg {

using Shape = std::vector<int64_t>;

inline int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until gradient flows into this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Consumes this node's grad and accumulates into parents' grads.
  std::function<void(TensorNode&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

// Reverse-mode differentiable n-d value. Copying a Tensor copies a handle to
// the shared node, not the data. Graph construction is single-writer per
// graph; distinct graphs are independent.
template <class T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  static Tensor leaf(Shape shape, std::vector<T> value, bool requires_grad = false) {
    if (shape_size(shape) != static_cast<int64_t>(value.size())) {
      throw Error("shape mismatch", "value count " + std::to_string(value.size()) +
                                        " vs shape " + shape_str(shape));
    }
    Tensor t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(value);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor constant(Shape shape, std::vector<T> value) {
    return leaf(std::move(shape), std::move(value), false);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> v(shape_size(shape), T(0));
    return leaf(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, T fill, bool requires_grad = false) {
    std::vector<T> v(shape_size(shape), fill);
    return leaf(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(T v) { return leaf({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return static_cast<int64_t>(node_->value.size()); }
  int64_t dim(size_t i) const { return node_->shape[i]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }

  const std::vector<T>& value() const { return node_->value; }
  std::vector<T>& mutable_value() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<T>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  T item() const {
    if (size() != 1) throw Error("non-scalar tensor", shape_str(shape()));
    return node_->value[0];
  }

  // Constant leaf with a copy of the values; cuts the graph.
  Tensor detached() const {
    Tensor t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = node_->shape;
    t.node_->value = node_->value;
    return t;
  }

  std::shared_ptr<TensorNode<T>> node() const { return node_; }

  static Tensor from_node(std::shared_ptr<TensorNode<T>> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

// Interior node factory: prunes parents/backward when no parent needs grads.
template <class T>
Tensor<T> make_op(Shape shape, std::vector<T> value,
                  std::vector<std::shared_ptr<TensorNode<T>>> parents,
                  std::function<void(TensorNode<T>&)> backward) {
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(n));
}

}  // namespace detail

// Reverse-mode accumulation from a scalar loss over the recorded graph.
// Each node is visited exactly once, in reverse topological order.
template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) throw Error("non-scalar loss", shape_str(loss.shape()));
  using Node = TensorNode<T>;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

}  // namespace panoseg
