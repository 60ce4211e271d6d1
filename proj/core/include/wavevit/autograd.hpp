#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "wavevit/tensor.hpp"

namespace wavevit {

enum class OpKind : std::uint8_t {
  leaf,
  matmul,
  linear,
  softmax,
  conv2d,
  layer_norm,
  gelu,
  relu,
  add,
  scale,
  sum,
  mean_rows,
  avg_pool2d,
  reshape,
  to_tokens,
  from_tokens,
  concat,
  split,
  split_heads,
  merge_heads,
  dwt2d,
  idwt2d,
  cross_entropy,
  custom,
};

const char* op_name(OpKind op);

template <typename T>
struct Node {
  using BackwardFn = std::function<void(Node&)>;

  OpKind op = OpKind::leaf;
  Tensor4<T> value;
  Tensor4<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;  // reads this->grad, accumulates into inputs

  bool is_leaf() const { return inputs.empty(); }

  /// Lazily allocated zero gradient buffer of the value's shape.
  Tensor4<T>& grad_buffer() {
    if (grad.empty() && value.numel() != 0) grad = Tensor4<T>(value.shape());
    return grad;
  }
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Handle to a graph node. Copies share the node.
template <typename T>
class Var {
 public:
  using NodeT = Node<T>;

  Var() = default;
  explicit Var(Tensor4<T> value, bool requires_grad = false)
      : node_(std::make_shared<NodeT>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<NodeT> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor4<T>& value() const { return node_->value; }
  Tensor4<T>& mutable_value() { return node_->value; }
  const Shape4& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient; zeros if backward never reached this node.
  Tensor4<T> grad() const {
    return node_->grad.empty() ? Tensor4<T>(shape()) : node_->grad;
  }
  void zero_grad() { node_->grad = Tensor4<T>(); }

  OpKind op() const { return node_->op; }
  const std::shared_ptr<NodeT>& node() const { return node_; }

  /// New leaf with the same value and no history.
  Var detach() const { return Var(node_->value, false); }

 private:
  std::shared_ptr<NodeT> node_;
};

/// Records a new node. If no input requires grad (or recording is off), the
/// result is a constant and `backward` is dropped.
template <typename T>
Var<T> make_result(OpKind op, Tensor4<T> value, std::vector<Var<T>> inputs,
                   typename Node<T>::BackwardFn backward);

/// Accumulates `delta` into the node's gradient buffer if it requires grad.
template <typename T>
void accumulate_grad(Node<T>& node, const Tensor4<T>& delta);

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls; call zero_grad on the leaves to reset. Intermediate gradients are
/// recomputed on each call.
template <typename T>
void backward(const Var<T>& loss);

/// Nodes reachable from `root`, inputs before consumers.
template <typename T>
std::vector<Node<T>*> topological_order(const Var<T>& root);

}  // namespace wavevit
