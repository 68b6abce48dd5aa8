#include "dsvqa/layers.h"

#include <cmath>

namespace dsvqa {

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(uniform(rng, -bound, bound));
  return t;
}

template <typename T>
Conv<T>::Conv(std::size_t in_channels, std::size_t out_channels, std::vector<std::size_t> kernel,
              ConvSpec spec_, Rng& rng)
    : spec(spec_) {
  if (kernel.empty() || kernel.size() > 3) throw ShapeError("Conv kernel must have 1-3 extents");
  Shape wshape{out_channels, in_channels};
  std::size_t fan_in = in_channels;
  for (auto k : kernel) {
    wshape.push_back(k);
    fan_in *= k;
  }
  weight = Parameter<T>(kaiming_uniform<T>(wshape, fan_in, rng));
  bias = Parameter<T>(Tensor<T>({out_channels}));
}

template <typename T>
Var<T> Conv<T>::forward(const Var<T>& x) const {
  switch (weight.value().rank()) {
    case 3:
      return conv1d(x, weight.var(), bias.var(), spec.pad[2]);
    case 4:
      return conv2d(x, weight.var(), bias.var(), {spec.stride[1], spec.stride[2]},
                    {spec.pad[1], spec.pad[2]});
    default:
      return conv3d(x, weight.var(), bias.var(), spec);
  }
}

template <typename T>
void Conv<T>::collect(const std::string& prefix, StateList<T>& out) {
  out.add(prefix + ".weight", weight);
  out.add(prefix + ".bias", bias);
}

template <typename T>
void Conv<T>::zero_init() {
  weight.value().fill(T(0));
  bias.value().fill(T(0));
}

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features, Rng& rng)
    : weight(kaiming_uniform<T>({in_features, out_features}, in_features, rng)),
      bias(Tensor<T>({out_features})) {}

template <typename T>
Var<T> Linear<T>::forward(const Var<T>& x) const {
  auto y = matmul(x, weight.var());
  return add(y, reshape(bias.var(), {1, bias.value().numel()}));
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, StateList<T>& out) {
  out.add(prefix + ".weight", weight);
  out.add(prefix + ".bias", bias);
}

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels)
    : gamma(Tensor<T>::full({channels}, T(1))),
      beta(Tensor<T>({channels})),
      state{Tensor<T>({channels}), Tensor<T>::full({channels}, T(1))} {}

template <typename T>
Var<T> BatchNorm<T>::forward(const Var<T>& x, const RunMode& mode) {
  BatchNormState<T>* st = (!mode.training || mode.update_stats) ? &state : nullptr;
  return batch_norm(x, gamma.var(), beta.var(), st, mode.training, static_cast<T>(kMomentum),
                    static_cast<T>(kEps));
}

template <typename T>
void BatchNorm<T>::collect(const std::string& prefix, StateList<T>& out) {
  out.add(prefix + ".gamma", gamma);
  out.add(prefix + ".beta", beta);
  out.add_buffer(prefix + ".running_mean", state.running_mean);
  out.add_buffer(prefix + ".running_var", state.running_var);
}

template Tensor<float> kaiming_uniform(Shape, std::size_t, Rng&);
template Tensor<double> kaiming_uniform(Shape, std::size_t, Rng&);
template class Conv<float>;
template class Conv<double>;
template class Linear<float>;
template class Linear<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;

}  // namespace dsvqa
