#include "omniscan/numerics/autograd.hpp"

#include <unordered_set>

namespace omniscan {

namespace {
thread_local bool g_grad_enabled = true;
thread_local OpProfile* g_profile = nullptr;
#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }
void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks() { return g_finite_checks; }

OpProfile::OpProfile() : last_(std::chrono::steady_clock::now()), previous_(g_profile) { g_profile = this; }
OpProfile::~OpProfile() { g_profile = previous_; }
OpProfile* OpProfile::active() { return g_profile; }

void OpProfile::charge_forward(const std::string& op) {
  const auto now = std::chrono::steady_clock::now();
  auto& t = timings_[op];
  ++t.calls;
  t.forward_seconds += std::chrono::duration<double>(now - last_).count();
  last_ = now;
}

void OpProfile::charge_backward(const std::string& op, double seconds) {
  timings_[op].backward_seconds += seconds;
  last_ = std::chrono::steady_clock::now();
}

template <typename T>
Var<T> record(std::string op, Tensor<T> value, const std::vector<Var<T>>& inputs,
              std::function<void(Node<T>&)> backward) {
  if (g_finite_checks && !value.all_finite())
    throw NumericError("non-finite value produced by '" + op + "' " + shape_str(value.shape()));
  if (g_profile) g_profile->charge_forward(op);
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = std::move(op);
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (const auto& in : inputs) n->inputs.push_back(in.shared());
    n->backward = std::move(backward);
  }
  return Var<T>(std::move(n));
}

template <typename T>
void accumulate(Node<T>& input, const Tensor<T>& g) {
  if (!input.requires_grad) return;
  if (g.size() != input.value.size())
    throw ShapeError("gradient " + shape_str(g.shape()) + " does not match value " + shape_str(input.value.shape()) +
                     " at '" + input.op + "'");
  if (input.grad.empty()) {
    input.grad = g.reshaped(input.value.shape());
    return;
  }
  T* dst = input.grad.raw();
  const T* src = g.raw();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

template <typename T>
Graph<T> Graph<T>::trace(const Var<T>& root) {
  Graph g;
  if (!root.defined()) return g;
  std::unordered_set<Node<T>*> visited;
  // Iterative post-order DFS; the recorded graph is acyclic by construction.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      g.order_.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

template <typename T>
std::vector<Node<T>*> Graph<T>::leaves() const {
  std::vector<Node<T>*> out;
  for (auto* n : order_)
    if (n->is_leaf() && n->requires_grad) out.push_back(n);
  return out;
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward on undefined value");
  if (loss.value().size() != 1)
    throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;
  auto graph = Graph<T>::trace(loss);
  Node<T>* root = loss.node();
  root->grad_buffer().fill(T(1));
  const auto& order = graph.order();
  // Released inputs are parked here so no node dies before it is visited.
  std::vector<std::shared_ptr<Node<T>>> released;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->is_leaf()) continue;
    if (n->backward && !n->grad.empty()) {
      if (g_profile) {
        const auto t0 = std::chrono::steady_clock::now();
        n->backward(*n);
        g_profile->charge_backward(n->op, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      } else {
        n->backward(*n);
      }
    }
    n->backward = nullptr;
    n->grad = Tensor<T>();
    for (auto& in : n->inputs) released.push_back(std::move(in));
    n->inputs.clear();
  }
}

#define OMNISCAN_INSTANTIATE(T)                                                                           \
  template Var<T> record<T>(std::string, Tensor<T>, const std::vector<Var<T>>&, std::function<void(Node<T>&)>); \
  template void accumulate<T>(Node<T>&, const Tensor<T>&);                                                 \
  template class Graph<T>;                                                                                 \
  template void backward<T>(const Var<T>&);

OMNISCAN_INSTANTIATE(float)
OMNISCAN_INSTANTIATE(double)
#undef OMNISCAN_INSTANTIATE

}  // namespace omniscan
