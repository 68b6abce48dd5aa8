#pragma once

#include <string>

#include "dsvqa/layers.h"

namespace dsvqa {

enum class TemporalConv { kTada, kC3d, kR2plus1d };

TemporalConv parse_temporal_conv(const std::string& name);
std::string to_string(TemporalConv kind);

struct TcmConfig {
  std::size_t in_channels = 3;
  std::size_t stem_channels1 = 16;
  std::size_t stem_channels2 = 32;
  std::size_t out_dim = 512;
  TemporalConv temporal = TemporalConv::kTada;
  std::size_t kernel = 3;            // spatial kernel of the temporal layers
  std::size_t calib_reduction = 4;   // channel bottleneck of the calibration branch
  std::size_t cbam_reduction = 4;
  std::size_t cbam_kernel = 7;
  std::size_t temporal_window = 0;   // 0: pool over the whole clip
  bool cbam_sequential = false;
};

/// Two 3x3x3 conv + BN + ReLU layers, spatial stride 2, temporal stride 1.
template <typename T>
class Stem {
 public:
  Stem() = default;
  Stem(const TcmConfig& config, Rng& rng);
  Var<T> forward(const Var<T>& clip, const RunMode& mode);
  void collect(const std::string& prefix, StateList<T>& out);

  Conv<T> conv1;
  BatchNorm<T> bn1;
  Conv<T> conv2;
  BatchNorm<T> bn2;
};

/// Time-shared spatial convolution whose output at step t is rescaled by a
/// per-(channel, t) calibration factor: y_t = (alpha_t * W) * x_t + b.
/// x: B x C x T x H x W, alpha: B x O x T.
template <typename T>
Var<T> tada_conv_apply(const Var<T>& x, const Var<T>& base_weight, const Var<T>& bias,
                       const Var<T>& alpha);

/// Temporal-adaptive convolution. The calibration branch pools space, runs two
/// temporal 1-D convs (kernel 3) and emits alpha = 1 + head output; the head is
/// zero-initialized so a fresh layer equals the shared convolution.
template <typename T>
class TadaConv {
 public:
  TadaConv() = default;
  TadaConv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
           std::size_t calib_reduction, Rng& rng);

  Var<T> calibration(const Var<T>& x) const;
  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, StateList<T>& out);

  Parameter<T> base_weight;  // O x C x 1 x k x k
  Parameter<T> bias;
  Conv<T> calib_hidden;
  Conv<T> calib_head;
};

/// One temporal layer of the TCM: a TadaConv or one of the plain 3-D baselines.
template <typename T>
class TemporalLayer {
 public:
  TemporalLayer() = default;
  TemporalLayer(TemporalConv kind, std::size_t channels, const TcmConfig& config, Rng& rng);
  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, StateList<T>& out);

  TemporalConv kind = TemporalConv::kTada;
  TadaConv<T> tada;
  Conv<T> spatial;   // c3d: the 3x3x3 conv; r(2+1)d: the 1x3x3 conv
  Conv<T> temporal;  // r(2+1)d: the 3x1x1 conv
};

/// relu(BN1(x) + BN2(windowed temporal mean of x)).
template <typename T>
class Aggregate {
 public:
  Aggregate() = default;
  Aggregate(std::size_t channels, std::size_t window);
  Var<T> forward(const Var<T>& x, const RunMode& mode);
  void collect(const std::string& prefix, StateList<T>& out);

  BatchNorm<T> bn_frame;
  BatchNorm<T> bn_pooled;
  std::size_t window = 0;
};

/// Channel and spatial sigmoid gates. Parallel form: both gates read the input,
/// out = x * Mc(x) * Ms(x). Sequential form: out = x' * Ms(x'), x' = x * Mc(x).
template <typename T>
class Cbam {
 public:
  Cbam() = default;
  Cbam(std::size_t channels, std::size_t reduction, std::size_t kernel, bool sequential,
       Rng& rng);

  Var<T> channel_gate(const Var<T>& x) const;  // B x C x 1 x 1 x 1
  Var<T> spatial_gate(const Var<T>& x) const;  // B x 1 x T x H x W
  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, StateList<T>& out);

  Linear<T> fc1;
  Linear<T> fc2;
  Conv<T> spatial;
  bool sequential = false;
};

/// stem -> temporal layer -> aggregate -> temporal layer -> CBAM -> global
/// mean -> projection to out_dim.
template <typename T>
class TcmHead {
 public:
  TcmHead(const TcmConfig& config, Rng& rng);

  Var<T> features(const Var<T>& clip, const RunMode& mode);  // before pooling
  Var<T> forward(const Var<T>& clip, const RunMode& mode);   // B x out_dim
  void collect(const std::string& prefix, StateList<T>& out);
  const TcmConfig& config() const { return config_; }

  Stem<T> stem;
  TemporalLayer<T> layer1;
  Aggregate<T> aggregate;
  TemporalLayer<T> layer2;
  Cbam<T> cbam;
  Linear<T> proj;

 private:
  TcmConfig config_;
};

#define DSVQA_TCM_EXTERN(T)              \
  extern template class Stem<T>;         \
  extern template class TadaConv<T>;     \
  extern template class TemporalLayer<T>; \
  extern template class Aggregate<T>;    \
  extern template class Cbam<T>;         \
  extern template class TcmHead<T>;
DSVQA_TCM_EXTERN(float)
DSVQA_TCM_EXTERN(double)
#undef DSVQA_TCM_EXTERN

}  // namespace dsvqa
