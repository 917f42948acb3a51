#ifndef SFFNET_AUTOGRAD_HPP
#define SFFNET_AUTOGRAD_HPP

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sffnet/tensor.hpp"

namespace sffnet {

namespace detail {
inline thread_local bool grad_enabled = true;
}  // namespace detail

inline bool grad_enabled() noexcept { return detail::grad_enabled; }

/// Disables graph recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// One recorded operation: its output value, the gradient buffer for that output,
/// the inputs it read, and the rule that pushes the output gradient to them.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node<T>>> inputs;
  std::function<void(Node<T>&)> backward_fn;

  bool is_leaf() const noexcept { return !backward_fn; }

  Tensor<T>& ensure_grad() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle to a graph node. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;

  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }

  /// Accumulated gradient; a zero tensor if nothing has been accumulated yet.
  Tensor<T> grad() const {
    if (node_->grad.empty()) return Tensor<T>(node_->value.shape());
    return node_->grad;
  }
  bool has_grad() const noexcept { return !node_->grad.empty(); }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Build an op result. The graph edge is recorded only when grad mode is on and
/// at least one input requires grad.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, const char* op,
                   std::function<void(Node<T>&)> backward_fn) {
  bool any = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) any = any || in.requires_grad();
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

/// Input i of a node, or nullptr if that input needs no gradient.
template <typename T>
Node<T>* grad_target(Node<T>& self, std::size_t i) {
  Node<T>* n = self.inputs[i].get();
  return n->requires_grad ? n : nullptr;
}

/// Reverse-mode sweep from a scalar root. Leaf gradients accumulate across calls;
/// interior gradients are reset at the start of each sweep.
template <typename T>
void backward(const Var<T>& root) {
  if (root.value().numel() != 1) {
    throw ShapeError("backward requires a scalar root, got " + root.shape().str());
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(&root.node(), 0);
  seen.insert(&root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) {
    if (!n->is_leaf()) {
      n->ensure_grad();
      n->grad.fill(T(0));
    }
  }
  root.node().ensure_grad()[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->is_leaf()) n->backward_fn(*n);
  }
}

/// Trainable tensor with a unique dotted name.
template <typename T>
struct Parameter {
  std::string name;
  Var<T> var;
};

/// Non-trainable named state (normalization running statistics).
template <typename T>
struct Buffer {
  std::string name;
  std::shared_ptr<Tensor<T>> tensor;
};

/// Collects the parameters and buffers of a model as layers are constructed.
template <typename T>
class Registry {
 public:
  Var<T> add_parameter(const std::string& name, Tensor<T> init) {
    check_unique(name);
    Var<T> v(std::move(init), true);
    params_.push_back({name, v});
    return v;
  }

  std::shared_ptr<Tensor<T>> add_buffer(const std::string& name, Tensor<T> init) {
    check_unique(name);
    auto t = std::make_shared<Tensor<T>>(std::move(init));
    buffers_.push_back({name, t});
    return t;
  }

  const std::vector<Parameter<T>>& parameters() const noexcept { return params_; }
  const std::vector<Buffer<T>>& buffers() const noexcept { return buffers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.value().numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

 private:
  void check_unique(const std::string& name) {
    if (!names_.insert(name).second) throw ConfigError("duplicate parameter name: " + name);
  }

  std::vector<Parameter<T>> params_;
  std::vector<Buffer<T>> buffers_;
  std::unordered_set<std::string> names_;
};

}  // namespace sffnet

#endif  // SFFNET_AUTOGRAD_HPP
