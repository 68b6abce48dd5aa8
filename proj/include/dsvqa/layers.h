#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dsvqa/ops.h"
#include "dsvqa/rng.h"

namespace dsvqa {

/// A learnable tensor. The gradient lives on the underlying graph leaf.
template <typename T>
class Parameter {
 public:
  Parameter() = default;
  explicit Parameter(Tensor<T> value, bool trainable = true)
      : var_(Var<T>::leaf(std::move(value), trainable)) {}

  const Var<T>& var() const { return var_; }
  Tensor<T>& value() { return var_.node()->value; }
  const Tensor<T>& value() const { return var_.value(); }
  Tensor<T> grad() const { return var_.grad(); }
  Tensor<T>& grad_ref() { return var_.node()->grad; }
  bool has_grad() const { return var_.has_grad(); }
  bool trainable() const { return var_.requires_grad(); }
  void set_trainable(bool on) { var_.node()->requires_grad = on; }
  void zero_grad() { var_.zero_grad(); }

 private:
  Var<T> var_;
};

/// Named handles into a model's parameters and non-learned buffers.
template <typename T>
struct StateList {
  std::vector<std::pair<std::string, Parameter<T>*>> params;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers;

  void add(const std::string& name, Parameter<T>& p) { params.emplace_back(name, &p); }
  void add_buffer(const std::string& name, Tensor<T>& t) { buffers.emplace_back(name, &t); }
};

struct RunMode {
  bool training = false;
  /// Fold batch statistics into BN running statistics (training mode only).
  bool update_stats = true;

  static RunMode train() { return {true, true}; }
  static RunMode eval() { return {false, false}; }
};

/// Kaiming-uniform fan-in initialization, bound sqrt(6 / fan_in).
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);

/// Convolution over 1, 2 or 3 trailing axes, selected by the kernel rank.
template <typename T>
class Conv {
 public:
  Conv() = default;
  /// kernel: spatial extents (1 to 3 of them).
  Conv(std::size_t in_channels, std::size_t out_channels, std::vector<std::size_t> kernel,
       ConvSpec spec, Rng& rng);

  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, StateList<T>& out);
  void zero_init();

  Parameter<T> weight;
  Parameter<T> bias;
  ConvSpec spec;
};

/// y = x W + b with x: B x in, W: in x out.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features, Rng& rng);

  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, StateList<T>& out);

  Parameter<T> weight;
  Parameter<T> bias;
};

template <typename T>
class BatchNorm {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels);

  Var<T> forward(const Var<T>& x, const RunMode& mode);
  void collect(const std::string& prefix, StateList<T>& out);

  Parameter<T> gamma;
  Parameter<T> beta;
  BatchNormState<T> state;
};

extern template class Conv<float>;
extern template class Conv<double>;
extern template class Linear<float>;
extern template class Linear<double>;
extern template class BatchNorm<float>;
extern template class BatchNorm<double>;

}  // namespace dsvqa
