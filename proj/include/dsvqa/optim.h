#pragma once

#include <vector>

#include "dsvqa/layers.h"

namespace dsvqa {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay:
///   p <- p - lr * wd * p
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// Only trainable parameters are registered; a parameter that received no
/// gradient in a step is left untouched.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Parameter<T>*> params, const AdamWOptions& options);

  void step();
  void zero_grad();
  long steps() const { return t_; }
  std::size_t size() const { return params_.size(); }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamWOptions options_;
  long t_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace dsvqa
