#include "dsvqa/optim.h"

#include <cmath>

namespace dsvqa {

template <typename T>
AdamW<T>::AdamW(std::vector<Parameter<T>*> params, const AdamWOptions& options)
    : options_(options) {
  for (auto* p : params) {
    if (!p->trainable()) continue;
    params_.push_back(p);
    m_.emplace_back(p->value().numel(), 0.0);
    v_.emplace_back(p->value().numel(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step() {
  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double decay = 1.0 - options_.lr * options_.weight_decay;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto* p = params_[k];
    if (!p->has_grad()) continue;
    auto& value = p->value();
    const auto& grad = p->grad_ref();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double g = grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      double w = static_cast<double>(value[i]) * decay;
      w -= options_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
      value[i] = static_cast<T>(w);
    }
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace dsvqa
