#pragma once

#include <string>
#include <vector>

#include "dsvqa/layers.h"

namespace dsvqa {

enum class FusionMode { kTextGuided, kConcat, kAdd };

FusionMode parse_fusion_mode(const std::string& name);
std::string to_string(FusionMode mode);

template <typename T>
struct TextEmbeddingSet {
  Tensor<T> guide;  // steers the fusion weights
  Tensor<T> pos;    // "high quality" prompt
  Tensor<T> neg;    // "low quality" prompt
};

/// Residual bottleneck MLP over text embeddings:
/// out = beta * fc2(relu(fc1(t))) + (1 - beta) * t, width D -> D/4 -> D.
template <typename T>
class TextAdapter {
 public:
  TextAdapter(std::size_t dim, double beta, Rng& rng);

  /// t: D or K x D.
  Var<T> forward(const Var<T>& t) const;
  void collect(const std::string& prefix, StateList<T>& out);

  Linear<T> fc1;
  Linear<T> fc2;
  double beta = 0.4;
};

/// Cosine of each feature row with the guide. features: K tensors of B x D;
/// guide: D. Returns B x K.
template <typename T>
Var<T> fusion_weights(const std::vector<Var<T>>& features, const Var<T>& guide);

/// sum_k weights[:, k] * features[k]. weights: B x K.
template <typename T>
Var<T> fuse(const std::vector<Var<T>>& features, const Var<T>& weights);

/// Unweighted sum of the features.
template <typename T>
Var<T> fuse_add(const std::vector<Var<T>>& features);

/// Concatenation followed by a K*D -> D linear map.
template <typename T>
class ConcatFusion {
 public:
  ConcatFusion(std::size_t branches, std::size_t dim, Rng& rng);
  Var<T> forward(const std::vector<Var<T>>& features) const;
  void collect(const std::string& prefix, StateList<T>& out);

  Linear<T> proj;
};

/// Scalar fusion weights of one video, in output order of the heads.
struct FusionWeights {
  double bvfe = 0.0;
  double tcm = 0.0;
  double vbtc = 0.0;
};

FusionWeights fusion_weights(const std::vector<double>& f_bvfe, const std::vector<double>& f_tcm,
                             const std::vector<double>& f_vbtc, const std::vector<double>& guide);

extern template class TextAdapter<float>;
extern template class TextAdapter<double>;
extern template class ConcatFusion<float>;
extern template class ConcatFusion<double>;

}  // namespace dsvqa
