#include "dsvqa/model.h"

#include <tuple>

namespace dsvqa {

std::vector<std::string> BranchSet::names() const {
  std::vector<std::string> out;
  if (bvfe) out.emplace_back("bvfe");
  if (tcm) out.emplace_back("tcm");
  if (vbtc) out.emplace_back("vbtc");
  return out;
}

BranchSet BranchSet::parse(const std::vector<std::string>& names) {
  BranchSet set{false, false, false};
  for (const auto& n : names) {
    if (n == "bvfe") {
      set.bvfe = true;
    } else if (n == "tcm") {
      set.tcm = true;
    } else if (n == "vbtc") {
      set.vbtc = true;
    } else {
      throw Error("unknown branch \"" + n + "\" (expected bvfe, tcm or vbtc)");
    }
  }
  if (set.count() == 0) throw Error("at least one branch must be enabled");
  return set;
}

template <typename T>
std::size_t Batch<T>::size() const {
  if (frames.rank() == 5) return frames.dim(0);
  if (clip.rank() == 5) return clip.dim(0);
  if (local.rank() == 5) return local.dim(0);
  return 0;
}

template <typename T>
QualityModel<T>::QualityModel(const ModelConfig& config, Rng& rng)
    : text_adapter(config.dim, config.text_beta, rng), config_(config) {
  if (config.branches.count() == 0) throw Error("at least one branch must be enabled");
  config_.tcm.out_dim = config.dim;
  // Construction order fixes the draw order from rng, so it stays stable.
  if (config.branches.bvfe) {
    bvfe = std::make_unique<BvfeHead<T>>(BvfeConfig{config.fragment_channels, config.dim}, rng);
  }
  if (config.branches.tcm) tcm = std::make_unique<TcmHead<T>>(config_.tcm, rng);
  if (config.branches.vbtc) {
    vbtc = std::make_unique<VbtcHead<T>>(VbtcConfig{config.dim, config.reduction, config.alpha},
                                         rng);
  }
  if (config.fusion == FusionMode::kConcat) {
    concat = std::make_unique<ConcatFusion<T>>(config.branches.count(), config.dim, rng);
  }
}

template <typename T>
std::vector<Var<T>> QualityModel<T>::branch_features(const Batch<T>& batch, const RunMode& mode) {
  std::vector<Var<T>> out;
  if (bvfe) out.push_back(bvfe->forward(Var<T>::constant(batch.local)));
  if (tcm) out.push_back(tcm->forward(Var<T>::constant(batch.clip), mode));
  if (vbtc) out.push_back(vbtc->forward(Var<T>::constant(batch.frames), mode));
  return out;
}

template <typename T>
Prediction<T> QualityModel<T>::forward(const Batch<T>& batch, const TextEmbeddingSet<T>& text,
                                       const RunMode& mode) {
  const auto features = branch_features(batch, mode);
  auto raw_pos = Var<T>::constant(text.pos);
  auto raw_neg = Var<T>::constant(text.neg);
  Var<T> t_pos = raw_pos;
  Var<T> t_neg = raw_neg;
  if (config_.adapt_prompts) {
    t_pos = text_adapter.forward(raw_pos);
    t_neg = text_adapter.forward(raw_neg);
  }

  Prediction<T> pred;
  switch (config_.fusion) {
    case FusionMode::kTextGuided: {
      auto guide = text_adapter.forward(Var<T>::constant(text.guide));
      pred.weights = fusion_weights(features, guide);
      auto w = config_.softmax_weights ? softmax(pred.weights, 1) : pred.weights;
      pred.fused = fuse(features, w);
      break;
    }
    case FusionMode::kConcat:
      pred.fused = concat->forward(features);
      break;
    case FusionMode::kAdd:
      pred.fused = fuse_add(features);
      break;
  }
  std::tie(pred.s_pos, pred.s_neg) =
      prompt_similarity(pred.fused, t_pos, t_neg, config_.temperature);
  pred.q = quality_score(pred.s_pos, pred.s_neg);
  return pred;
}

template <typename T>
StateList<T> QualityModel<T>::state() {
  StateList<T> out;
  if (bvfe) bvfe->collect("bvfe", out);
  if (tcm) tcm->collect("tcm", out);
  if (vbtc) vbtc->collect("vbtc", out);
  text_adapter.collect("text_adapter", out);
  if (concat) concat->collect("concat", out);
  return out;
}

template struct Batch<float>;
template struct Batch<double>;
template class QualityModel<float>;
template class QualityModel<double>;

}  // namespace dsvqa
