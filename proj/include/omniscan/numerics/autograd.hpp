#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "omniscan/numerics/tensor.hpp"

namespace omniscan {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::string op;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs that require it.
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool is_leaf() const { return inputs.empty(); }
};

/// Handle to a value in the recorded computation. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Accumulated gradient; zeros when nothing reached this node.
  Tensor<T> grad() const {
    return node_->grad.empty() ? Tensor<T>(node_->value.shape()) : node_->grad;
  }
  void zero_grad() { node_->grad = Tensor<T>(); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = "constant";
  return Var<T>(std::move(n));
}

template <typename T>
Var<T> parameter(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->op = "parameter";
  return Var<T>(std::move(n));
}

/// Disables graph recording on this thread for the guard's lifetime.
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

struct OpTiming {
  std::size_t calls = 0;
  double forward_seconds = 0, backward_seconds = 0;
};

/// Collects per-operator wall time on this thread while alive. Forward time is
/// the interval since the previous recorded op, so glue code between ops is
/// charged to the op that follows it.
class OpProfile {
 public:
  OpProfile();
  ~OpProfile();
  OpProfile(const OpProfile&) = delete;
  OpProfile& operator=(const OpProfile&) = delete;

  const std::map<std::string, OpTiming>& timings() const { return timings_; }
  void charge_forward(const std::string& op);
  void charge_backward(const std::string& op, double seconds);
  static OpProfile* active();

 private:
  std::map<std::string, OpTiming> timings_;
  std::chrono::steady_clock::time_point last_;
  OpProfile* previous_;
};

/// Finite-value checking on every operator output. On by default in debug builds.
void set_finite_checks(bool enabled);
bool finite_checks();

/// Records an operator application. The backward closure is dropped when no
/// input requires a gradient or recording is disabled.
template <typename T>
Var<T> record(std::string op, Tensor<T> value, const std::vector<Var<T>>& inputs,
              std::function<void(Node<T>&)> backward);

/// Adds g into the input's gradient buffer if it requires one.
template <typename T>
void accumulate(Node<T>& input, const Tensor<T>& g);

/// Nodes reachable from a root, in topological order (inputs before consumers).
template <typename T>
class Graph {
 public:
  static Graph trace(const Var<T>& root);

  const std::vector<Node<T>*>& order() const { return order_; }
  std::vector<Node<T>*> leaves() const;

 private:
  std::vector<Node<T>*> order_;
};

/// Reverse-mode pass from a scalar loss. Gradients accumulate into leaves;
/// interior gradients and closures are released afterwards.
template <typename T>
void backward(const Var<T>& loss);

}  // namespace omniscan
