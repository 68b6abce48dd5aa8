#include "dsvqa/tcm.h"

#include <algorithm>

namespace dsvqa {

TemporalConv parse_temporal_conv(const std::string& name) {
  if (name == "tadaconv") return TemporalConv::kTada;
  if (name == "c3d") return TemporalConv::kC3d;
  if (name == "r2plus1d" || name == "r(2+1)d") return TemporalConv::kR2plus1d;
  throw Error("unknown temporal_conv \"" + name + "\" (expected tadaconv, c3d or r2plus1d)");
}

std::string to_string(TemporalConv kind) {
  switch (kind) {
    case TemporalConv::kTada:
      return "tadaconv";
    case TemporalConv::kC3d:
      return "c3d";
    case TemporalConv::kR2plus1d:
      return "r2plus1d";
  }
  return "tadaconv";
}

namespace {

ConvSpec make_spec(std::array<std::size_t, 3> stride, std::array<std::size_t, 3> pad) {
  ConvSpec s;
  s.stride = stride;
  s.pad = pad;
  return s;
}

}  // namespace

template <typename T>
Stem<T>::Stem(const TcmConfig& config, Rng& rng) {
  const auto spec = make_spec({1, 2, 2}, {1, 1, 1});
  conv1 = Conv<T>(config.in_channels, config.stem_channels1, {3, 3, 3}, spec, rng);
  bn1 = BatchNorm<T>(config.stem_channels1);
  conv2 = Conv<T>(config.stem_channels1, config.stem_channels2, {3, 3, 3}, spec, rng);
  bn2 = BatchNorm<T>(config.stem_channels2);
}

template <typename T>
Var<T> Stem<T>::forward(const Var<T>& clip, const RunMode& mode) {
  auto h = relu(bn1.forward(conv1.forward(clip), mode));
  return relu(bn2.forward(conv2.forward(h), mode));
}

template <typename T>
void Stem<T>::collect(const std::string& prefix, StateList<T>& out) {
  conv1.collect(prefix + ".conv1", out);
  bn1.collect(prefix + ".bn1", out);
  conv2.collect(prefix + ".conv2", out);
  bn2.collect(prefix + ".bn2", out);
}

template <typename T>
Var<T> tada_conv_apply(const Var<T>& x, const Var<T>& base_weight, const Var<T>& bias,
                       const Var<T>& alpha) {
  if (x.rank() != 5) throw ShapeError("tada_conv expects B x C x T x H x W input");
  if (base_weight.rank() != 5 || base_weight.dim(2) != 1) {
    throw ShapeError("tada_conv base weight must be O x C x 1 x k x k, got " +
                     shape_str(base_weight.shape()));
  }
  const std::size_t b = x.dim(0);
  const std::size_t o = base_weight.dim(0);
  const std::size_t t = x.dim(2);
  if (alpha.shape() != Shape{b, o, t}) {
    throw ShapeError("calibration output " + shape_str(alpha.shape()) + " does not match " +
                     shape_str({b, o, t}) + " (T mismatch)");
  }
  ConvSpec spec;
  spec.pad = {0, base_weight.dim(3) / 2, base_weight.dim(4) / 2};
  auto shared = conv3d(x, base_weight, Var<T>(), spec);
  auto y = mul(shared, reshape(alpha, {b, o, t, 1, 1}));
  if (bias.defined()) y = add(y, reshape(bias, {1, o, 1, 1, 1}));
  return y;
}

template <typename T>
TadaConv<T>::TadaConv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                      std::size_t calib_reduction, Rng& rng) {
  base_weight = Parameter<T>(kaiming_uniform<T>({out_channels, in_channels, 1, kernel, kernel},
                                                in_channels * kernel * kernel, rng));
  bias = Parameter<T>(Tensor<T>({out_channels}));
  const std::size_t hidden = std::max<std::size_t>(1, in_channels / std::max<std::size_t>(1, calib_reduction));
  ConvSpec temporal;
  temporal.pad = {0, 0, 1};
  calib_hidden = Conv<T>(in_channels, hidden, {3}, temporal, rng);
  calib_head = Conv<T>(hidden, out_channels, {3}, temporal, rng);
  calib_head.zero_init();
}

template <typename T>
Var<T> TadaConv<T>::calibration(const Var<T>& x) const {
  auto pooled = mean(x, {3, 4});  // B x C x T
  auto h = relu(calib_hidden.forward(pooled));
  return add_scalar(calib_head.forward(h), T(1));
}

template <typename T>
Var<T> TadaConv<T>::forward(const Var<T>& x) const {
  return tada_conv_apply(x, base_weight.var(), bias.var(), calibration(x));
}

template <typename T>
void TadaConv<T>::collect(const std::string& prefix, StateList<T>& out) {
  out.add(prefix + ".base_weight", base_weight);
  out.add(prefix + ".bias", bias);
  calib_hidden.collect(prefix + ".calib_hidden", out);
  calib_head.collect(prefix + ".calib_head", out);
}

template <typename T>
TemporalLayer<T>::TemporalLayer(TemporalConv kind_, std::size_t channels,
                                const TcmConfig& config, Rng& rng)
    : kind(kind_) {
  const std::size_t k = config.kernel;
  switch (kind) {
    case TemporalConv::kTada:
      tada = TadaConv<T>(channels, channels, k, config.calib_reduction, rng);
      break;
    case TemporalConv::kC3d:
      spatial = Conv<T>(channels, channels, {k, k, k}, make_spec({1, 1, 1}, {k / 2, k / 2, k / 2}),
                        rng);
      break;
    case TemporalConv::kR2plus1d:
      spatial = Conv<T>(channels, channels, {1, k, k}, make_spec({1, 1, 1}, {0, k / 2, k / 2}), rng);
      temporal = Conv<T>(channels, channels, {k, 1, 1}, make_spec({1, 1, 1}, {k / 2, 0, 0}), rng);
      break;
  }
}

template <typename T>
Var<T> TemporalLayer<T>::forward(const Var<T>& x) const {
  switch (kind) {
    case TemporalConv::kTada:
      return tada.forward(x);
    case TemporalConv::kC3d:
      return spatial.forward(x);
    case TemporalConv::kR2plus1d:
      return temporal.forward(relu(spatial.forward(x)));
  }
  return x;
}

template <typename T>
void TemporalLayer<T>::collect(const std::string& prefix, StateList<T>& out) {
  switch (kind) {
    case TemporalConv::kTada:
      tada.collect(prefix + ".tada", out);
      break;
    case TemporalConv::kC3d:
      spatial.collect(prefix + ".c3d", out);
      break;
    case TemporalConv::kR2plus1d:
      spatial.collect(prefix + ".spatial", out);
      temporal.collect(prefix + ".temporal", out);
      break;
  }
}

template <typename T>
Aggregate<T>::Aggregate(std::size_t channels, std::size_t window_)
    : bn_frame(channels), bn_pooled(channels), window(window_) {}

template <typename T>
Var<T> Aggregate<T>::forward(const Var<T>& x, const RunMode& mode) {
  // The pooled branch is broadcast back over its window; BN statistics of the
  // broadcast tensor equal those of the pooled one.
  auto pooled = segment_mean(x, 2, window);
  return relu(add(bn_frame.forward(x, mode), bn_pooled.forward(pooled, mode)));
}

template <typename T>
void Aggregate<T>::collect(const std::string& prefix, StateList<T>& out) {
  bn_frame.collect(prefix + ".bn_frame", out);
  bn_pooled.collect(prefix + ".bn_pooled", out);
}

template <typename T>
Cbam<T>::Cbam(std::size_t channels, std::size_t reduction, std::size_t kernel, bool sequential_,
              Rng& rng)
    : sequential(sequential_) {
  if (reduction == 0 || channels % reduction != 0) {
    throw Error("CBAM channels " + std::to_string(channels) + " not divisible by " +
                std::to_string(reduction));
  }
  fc1 = Linear<T>(channels, channels / reduction, rng);
  fc2 = Linear<T>(channels / reduction, channels, rng);
  spatial = Conv<T>(2, 1, {1, kernel, kernel}, make_spec({1, 1, 1}, {0, kernel / 2, kernel / 2}),
                    rng);
}

template <typename T>
Var<T> Cbam<T>::channel_gate(const Var<T>& x) const {
  const std::size_t b = x.dim(0);
  const std::size_t c = x.dim(1);
  auto mlp = [this](const Var<T>& v) { return fc2.forward(relu(fc1.forward(v))); };
  auto logits = add(mlp(mean(x, {2, 3, 4})), mlp(amax(x, {2, 3, 4})));
  return reshape(sigmoid(logits), {b, c, 1, 1, 1});
}

template <typename T>
Var<T> Cbam<T>::spatial_gate(const Var<T>& x) const {
  auto maps = concat<T>({mean(x, {1}, true), amax(x, {1}, true)}, 1);
  return sigmoid(spatial.forward(maps));
}

template <typename T>
Var<T> Cbam<T>::forward(const Var<T>& x) const {
  if (x.rank() != 5) throw ShapeError("CBAM expects B x C x T x H x W input");
  if (sequential) {
    auto refined = mul(x, channel_gate(x));
    return mul(refined, spatial_gate(refined));
  }
  return mul(mul(x, channel_gate(x)), spatial_gate(x));
}

template <typename T>
void Cbam<T>::collect(const std::string& prefix, StateList<T>& out) {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
  spatial.collect(prefix + ".spatial", out);
}

template <typename T>
TcmHead<T>::TcmHead(const TcmConfig& config, Rng& rng) : config_(config) {
  const std::size_t c = config.stem_channels2;
  stem = Stem<T>(config, rng);
  layer1 = TemporalLayer<T>(config.temporal, c, config, rng);
  aggregate = Aggregate<T>(c, config.temporal_window);
  layer2 = TemporalLayer<T>(config.temporal, c, config, rng);
  cbam = Cbam<T>(c, config.cbam_reduction, config.cbam_kernel, config.cbam_sequential, rng);
  proj = Linear<T>(c, config.out_dim, rng);
}

template <typename T>
Var<T> TcmHead<T>::features(const Var<T>& clip, const RunMode& mode) {
  if (clip.rank() != 5 || clip.dim(1) != config_.in_channels) {
    throw ShapeError("TCM expects B x " + std::to_string(config_.in_channels) +
                     " x T x H x W clips, got " + shape_str(clip.shape()));
  }
  if (clip.dim(2) < 2) throw ShapeError("TCM needs at least 2 frames");
  auto f = stem.forward(clip, mode);
  f = aggregate.forward(layer1.forward(f), mode);
  return cbam.forward(layer2.forward(f));
}

template <typename T>
Var<T> TcmHead<T>::forward(const Var<T>& clip, const RunMode& mode) {
  return proj.forward(mean(features(clip, mode), {2, 3, 4}));
}

template <typename T>
void TcmHead<T>::collect(const std::string& prefix, StateList<T>& out) {
  stem.collect(prefix + ".stem", out);
  layer1.collect(prefix + ".layer1", out);
  aggregate.collect(prefix + ".aggregate", out);
  layer2.collect(prefix + ".layer2", out);
  cbam.collect(prefix + ".cbam", out);
  proj.collect(prefix + ".proj", out);
}

template Var<float> tada_conv_apply(const Var<float>&, const Var<float>&, const Var<float>&,
                                    const Var<float>&);
template Var<double> tada_conv_apply(const Var<double>&, const Var<double>&, const Var<double>&,
                                     const Var<double>&);

#define DSVQA_TCM_INSTANTIATE(T)   \
  template class Stem<T>;          \
  template class TadaConv<T>;      \
  template class TemporalLayer<T>; \
  template class Aggregate<T>;     \
  template class Cbam<T>;          \
  template class TcmHead<T>;
DSVQA_TCM_INSTANTIATE(float)
DSVQA_TCM_INSTANTIATE(double)

}  // namespace dsvqa
