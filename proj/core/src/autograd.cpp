#include "wavevit/autograd.hpp"

#include <cassert>
#include <unordered_set>

namespace wavevit {

namespace {
thread_local bool g_grad_enabled = true;
}

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::linear: return "linear";
    case OpKind::softmax: return "softmax";
    case OpKind::conv2d: return "conv2d";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::gelu: return "gelu";
    case OpKind::relu: return "relu";
    case OpKind::add: return "add";
    case OpKind::scale: return "scale";
    case OpKind::sum: return "sum";
    case OpKind::mean_rows: return "mean_rows";
    case OpKind::avg_pool2d: return "avg_pool2d";
    case OpKind::reshape: return "reshape";
    case OpKind::to_tokens: return "to_tokens";
    case OpKind::from_tokens: return "from_tokens";
    case OpKind::concat: return "concat";
    case OpKind::split: return "split";
    case OpKind::split_heads: return "split_heads";
    case OpKind::merge_heads: return "merge_heads";
    case OpKind::dwt2d: return "dwt2d";
    case OpKind::idwt2d: return "idwt2d";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::custom: return "custom";
  }
  return "unknown";
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

template <typename T>
Var<T> make_result(OpKind op, Tensor4<T> value, std::vector<Var<T>> inputs,
                   typename Node<T>::BackwardFn backward) {
#ifndef NDEBUG
  assert(value.all_finite() && "non-finite value produced by an op");
#endif
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  node->value = std::move(value);
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

template <typename T>
void accumulate_grad(Node<T>& node, const Tensor4<T>& delta) {
  if (!node.requires_grad) return;
  auto& g = node.grad_buffer();
  if (g.shape() != delta.shape()) {
    throw ShapeError("accumulate_grad: gradient shape " + delta.shape().str() +
                     " does not match value shape " + g.shape().str());
  }
  auto dst = g.data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
std::vector<Node<T>*> topological_order(const Var<T>& root) {
  std::vector<Node<T>*> order;
  if (!root.defined()) return order;
  std::unordered_set<const Node<T>*> visited;
  // Iterative post-order DFS; recursion depth would track network depth.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::logic_error("backward: loss must be a scalar, got shape " +
                           (loss.defined() ? loss.shape().str() : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;
  auto order = topological_order(loss);
  for (Node<T>* n : order) {
    if (!n->is_leaf()) n->grad = Tensor4<T>();
  }
  Node<T>& root = *loss.node();
  root.grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->is_leaf() || !n->backward || n->grad.empty()) continue;
    n->backward(*n);
  }
}

template Var<float> make_result(OpKind, Tensor4<float>, std::vector<Var<float>>,
                                Node<float>::BackwardFn);
template Var<double> make_result(OpKind, Tensor4<double>, std::vector<Var<double>>,
                                 Node<double>::BackwardFn);
template void accumulate_grad(Node<float>&, const Tensor4<float>&);
template void accumulate_grad(Node<double>&, const Tensor4<double>&);
template std::vector<Node<float>*> topological_order(const Var<float>&);
template std::vector<Node<double>*> topological_order(const Var<double>&);
template void backward(const Var<float>&);
template void backward(const Var<double>&);

}  // namespace wavevit
