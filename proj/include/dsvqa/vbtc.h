#pragma once

#include "dsvqa/layers.h"

namespace dsvqa {

/// Mean over the frame axis. Accepts T x D, T x D x H x W, or a batch
/// B x T x D x H x W (pooled over axis 1).
template <typename T>
Var<T> temporal_pool(const Var<T>& frames);

/// alpha * adapted + (1 - alpha) * original, alpha in [0, 1].
template <typename T>
Var<T> residual_blend(const Var<T>& adapted, const Var<T>& original, double alpha);

struct VbtcConfig {
  std::size_t dim = 512;
  std::size_t reduction = 4;
  double alpha = 0.4;
};

/// Temporal CLIP head: frame pooling, bottleneck adapter, residual blend.
template <typename T>
class VbtcHead {
 public:
  VbtcHead(const VbtcConfig& config, Rng& rng);

  /// Z: B x D x H x W. Two blocks of 1x1 conv + BN + ReLU (D -> D/r -> D).
  Var<T> adapter(const Var<T>& z, const RunMode& mode);
  /// frames: B x T x D x H x W. Returns the spatially pooled blend, B x D.
  Var<T> forward(const Var<T>& frames, const RunMode& mode);
  void collect(const std::string& prefix, StateList<T>& out);

  const VbtcConfig& config() const { return config_; }

  Conv<T> down;
  BatchNorm<T> down_bn;
  Conv<T> up;
  BatchNorm<T> up_bn;

 private:
  VbtcConfig config_;
};

extern template class VbtcHead<float>;
extern template class VbtcHead<double>;

}  // namespace dsvqa
