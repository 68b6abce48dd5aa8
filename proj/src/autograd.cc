#include "dsvqa/autograd.h"

#include <unordered_set>

namespace dsvqa {

namespace {

thread_local bool g_grad_enabled = true;
thread_local KinkTrace* g_kink_trace = nullptr;

}  // namespace

template <typename T>
void Node<T>::accumulate(const Tensor<T>& g) {
  if (g.shape() != value.shape()) {
    throw ShapeError(std::string("gradient shape ") + shape_str(g.shape()) + " does not match " +
                     shape_str(value.shape()) + " at " + op);
  }
  if (!has_grad) {
    grad = g;
    has_grad = true;
    return;
  }
  auto dst = grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void Node<T>::zero_grad() {
  has_grad = false;
  grad = Tensor<T>();
}

template <typename T>
Var<T> Var<T>::constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = "constant";
  return Var(std::move(node));
}

template <typename T>
Var<T> Var<T>::leaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

template <typename T>
Tensor<T> Var<T>::grad() const {
  if (node_->has_grad) return node_->grad;
  return Tensor<T>::zeros(node_->value.shape());
}

template <typename T>
Var<T> make_op(const char* name, Tensor<T> value, std::vector<Var<T>> inputs,
               std::function<void(const Tensor<T>&)> backward_fn) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + name);
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = name;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

template <typename T>
void backward(const Var<T>& root) {
  if (root.numel() != 1) {
    throw ShapeError("backward() needs a scalar root, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
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

  root.node()->accumulate(Tensor<T>::full(root.shape(), T(1)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && node->has_grad) node->backward_fn(node->grad);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

KinkTrace::KinkTrace() : previous_(g_kink_trace), hash_(1469598103934665603ULL) {
  g_kink_trace = this;
}
KinkTrace::~KinkTrace() { g_kink_trace = previous_; }

std::uint64_t KinkTrace::signature() const { return hash_; }
void KinkTrace::reset() { hash_ = 1469598103934665603ULL; }
bool KinkTrace::active() { return g_kink_trace != nullptr; }

void KinkTrace::record(std::uint64_t value) {
  if (!g_kink_trace) return;
  std::uint64_t h = g_kink_trace->hash_;
  for (int i = 0; i < 8; ++i) {
    h ^= (value >> (8 * i)) & 0xffu;
    h *= 1099511628211ULL;
  }
  g_kink_trace->hash_ = h;
}

template struct Node<float>;
template struct Node<double>;
template class Var<float>;
template class Var<double>;
template Var<float> make_op(const char*, Tensor<float>, std::vector<Var<float>>,
                            std::function<void(const Tensor<float>&)>);
template Var<double> make_op(const char*, Tensor<double>, std::vector<Var<double>>,
                             std::function<void(const Tensor<double>&)>);
template void backward(const Var<float>&);
template void backward(const Var<double>&);

}  // namespace dsvqa
