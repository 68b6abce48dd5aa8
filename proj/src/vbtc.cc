#include "dsvqa/vbtc.h"

namespace dsvqa {

template <typename T>
Var<T> temporal_pool(const Var<T>& frames) {
  const std::size_t r = frames.rank();
  if (r != 2 && r != 4 && r != 5) {
    throw ShapeError("temporal_pool expects T x D, T x D x H x W or B x T x D x H x W, got " +
                     shape_str(frames.shape()));
  }
  const std::size_t axis = r == 5 ? 1 : 0;
  if (frames.dim(axis) == 0) throw ShapeError("temporal_pool of an empty frame sequence");
  return mean(frames, {axis});
}

template <typename T>
Var<T> residual_blend(const Var<T>& adapted, const Var<T>& original, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error("residual weight alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  if (adapted.shape() != original.shape()) {
    throw ShapeError("residual_blend shape mismatch: " + shape_str(adapted.shape()) + " vs " +
                     shape_str(original.shape()));
  }
  return add(scale(adapted, static_cast<T>(alpha)), scale(original, static_cast<T>(1.0 - alpha)));
}

template <typename T>
VbtcHead<T>::VbtcHead(const VbtcConfig& config, Rng& rng) : config_(config) {
  if (config.reduction == 0 || config.dim % config.reduction != 0) {
    throw Error("adapter width " + std::to_string(config.dim) + " is not divisible by r = " +
                std::to_string(config.reduction));
  }
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) throw Error("alpha must lie in [0, 1]");
  const std::size_t hidden = config.dim / config.reduction;
  down = Conv<T>(config.dim, hidden, {1, 1}, {}, rng);
  down_bn = BatchNorm<T>(hidden);
  up = Conv<T>(hidden, config.dim, {1, 1}, {}, rng);
  up_bn = BatchNorm<T>(config.dim);
}

template <typename T>
Var<T> VbtcHead<T>::adapter(const Var<T>& z, const RunMode& mode) {
  if (z.rank() != 4 || z.dim(1) != config_.dim) {
    throw ShapeError("adapter expects B x " + std::to_string(config_.dim) + " x H x W, got " +
                     shape_str(z.shape()));
  }
  auto h = relu(down_bn.forward(down.forward(z), mode));
  return relu(up_bn.forward(up.forward(h), mode));
}

template <typename T>
Var<T> VbtcHead<T>::forward(const Var<T>& frames, const RunMode& mode) {
  if (frames.rank() != 5) {
    throw ShapeError("VbtcHead expects B x T x D x H x W frames, got " +
                     shape_str(frames.shape()));
  }
  auto z = temporal_pool(frames);
  auto blended = residual_blend(adapter(z, mode), z, config_.alpha);
  return mean(blended, {2, 3});
}

template <typename T>
void VbtcHead<T>::collect(const std::string& prefix, StateList<T>& out) {
  down.collect(prefix + ".adapter.down", out);
  down_bn.collect(prefix + ".adapter.down_bn", out);
  up.collect(prefix + ".adapter.up", out);
  up_bn.collect(prefix + ".adapter.up_bn", out);
}

template Var<float> temporal_pool(const Var<float>&);
template Var<double> temporal_pool(const Var<double>&);
template Var<float> residual_blend(const Var<float>&, const Var<float>&, double);
template Var<double> residual_blend(const Var<double>&, const Var<double>&, double);
template class VbtcHead<float>;
template class VbtcHead<double>;

}  // namespace dsvqa
