#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dsvqa/tensor.h"

namespace dsvqa {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty (numel 0 shape {0}) until first accumulation
  bool requires_grad = false;
  bool has_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(const Tensor<T>&)> backward_fn;

  void accumulate(const Tensor<T>& g);
  void zero_grad();
};

/// Handle to a node in the computation graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  /// Constant (non-differentiable) input.
  static Var constant(Tensor<T> value);
  /// Differentiable leaf, e.g. a trainable parameter.
  static Var leaf(Tensor<T> value, bool requires_grad);

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t rank() const { return node_->value.rank(); }
  std::size_t numel() const { return node_->value.numel(); }
  T item() const { return node_->value.item(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->has_grad; }
  /// Gradient accumulated by backward(); zeros when nothing has flowed here.
  Tensor<T> grad() const;
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }
  void zero_grad() { node_->zero_grad(); }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Records a new graph node. The backward closure receives the gradient of the
/// output and must accumulate into the inputs it was built over. Throws
/// NumericError if `value` contains NaN or Inf.
template <typename T>
Var<T> make_op(const char* name, Tensor<T> value, std::vector<Var<T>> inputs,
               std::function<void(const Tensor<T>&)> backward_fn);

/// Reverse-mode accumulation from a scalar root into every reachable node
/// that requires a gradient.
template <typename T>
void backward(const Var<T>& root);

/// Scoped switch that stops graph recording (evaluation, finite differences).
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

/// Fingerprint of the branch pattern taken by non-smooth ops (ReLU signs,
/// max selections) while active. The gradient checker uses it to detect
/// finite-difference probes that straddle a kink.
class KinkTrace {
 public:
  KinkTrace();
  ~KinkTrace();
  KinkTrace(const KinkTrace&) = delete;
  KinkTrace& operator=(const KinkTrace&) = delete;

  std::uint64_t signature() const;
  void reset();

  static bool active();
  static void record(std::uint64_t value);

 private:
  KinkTrace* previous_;
  std::uint64_t hash_;
};

extern template class Var<float>;
extern template class Var<double>;

}  // namespace dsvqa
