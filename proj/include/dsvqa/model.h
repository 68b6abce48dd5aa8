#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dsvqa/bvfe.h"
#include "dsvqa/fusion.h"
#include "dsvqa/scoring.h"
#include "dsvqa/tcm.h"
#include "dsvqa/vbtc.h"

namespace dsvqa {

struct BranchSet {
  bool bvfe = true;
  bool tcm = true;
  bool vbtc = true;

  std::size_t count() const { return std::size_t(bvfe) + std::size_t(tcm) + std::size_t(vbtc); }
  std::vector<std::string> names() const;
  static BranchSet parse(const std::vector<std::string>& names);
};

struct ModelConfig {
  std::size_t dim = 512;            // shared embedding width D
  std::size_t reduction = 4;        // VBTC adapter bottleneck
  double alpha = 0.4;               // VBTC residual weight
  std::size_t fragment_channels = 768;
  TcmConfig tcm;                    // out_dim is overwritten with dim
  FusionMode fusion = FusionMode::kTextGuided;
  BranchSet branches;
  double temperature = 1.0;
  double text_beta = 0.4;
  bool softmax_weights = false;     // normalize the cosine weights across branches
  bool adapt_prompts = true;        // route the prompt pair through the text adapter too
};

/// One minibatch of model inputs. Only the tensors of enabled branches are
/// read.
template <typename T>
struct Batch {
  Tensor<T> frames;  // B x T x D x H x W frame embeddings
  Tensor<T> clip;    // B x 3 x T x H x W pixels
  Tensor<T> local;   // B x C x T x H x W fragment features

  std::size_t size() const;
};

template <typename T>
struct Prediction {
  Var<T> q;        // B, quality in (0, 1)
  Var<T> s_pos;    // B
  Var<T> s_neg;    // B
  Var<T> weights;  // B x K fusion weights (text_guided only)
  Var<T> fused;    // B x D
};

/// Full dual-stream pipeline: heads, fusion, prompt-softmax score.
template <typename T>
class QualityModel {
 public:
  QualityModel(const ModelConfig& config, Rng& rng);

  Prediction<T> forward(const Batch<T>& batch, const TextEmbeddingSet<T>& text,
                        const RunMode& mode);

  /// Per-branch features in fusion order (bvfe, tcm, vbtc) for enabled branches.
  std::vector<Var<T>> branch_features(const Batch<T>& batch, const RunMode& mode);

  /// Every parameter and buffer, with stable dotted names. Disabled branches
  /// contribute nothing.
  StateList<T> state();

  const ModelConfig& config() const { return config_; }

  std::unique_ptr<BvfeHead<T>> bvfe;
  std::unique_ptr<TcmHead<T>> tcm;
  std::unique_ptr<VbtcHead<T>> vbtc;
  TextAdapter<T> text_adapter;
  std::unique_ptr<ConcatFusion<T>> concat;

 private:
  ModelConfig config_;
};

extern template struct Batch<float>;
extern template struct Batch<double>;
extern template class QualityModel<float>;
extern template class QualityModel<double>;

}  // namespace dsvqa
