#include "dsvqa/fusion.h"

namespace dsvqa {

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "text_guided") return FusionMode::kTextGuided;
  if (name == "concat") return FusionMode::kConcat;
  if (name == "add") return FusionMode::kAdd;
  throw Error("unknown fusion_mode \"" + name + "\" (expected text_guided, concat or add)");
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kTextGuided:
      return "text_guided";
    case FusionMode::kConcat:
      return "concat";
    case FusionMode::kAdd:
      return "add";
  }
  return "text_guided";
}

template <typename T>
TextAdapter<T>::TextAdapter(std::size_t dim, double beta_, Rng& rng) : beta(beta_) {
  if (dim < 4 || dim % 4 != 0) throw Error("text adapter width must be a multiple of 4");
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error("text adapter beta must lie in [0, 1]");
  fc1 = Linear<T>(dim, dim / 4, rng);
  fc2 = Linear<T>(dim / 4, dim, rng);
}

template <typename T>
Var<T> TextAdapter<T>::forward(const Var<T>& t) const {
  const bool vector = t.rank() == 1;
  auto rows = vector ? reshape(t, {1, t.dim(0)}) : t;
  auto adapted = fc2.forward(relu(fc1.forward(rows)));
  auto out = add(scale(adapted, static_cast<T>(beta)), scale(rows, static_cast<T>(1.0 - beta)));
  return vector ? reshape(out, {t.dim(0)}) : out;
}

template <typename T>
void TextAdapter<T>::collect(const std::string& prefix, StateList<T>& out) {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

template <typename T>
Var<T> fusion_weights(const std::vector<Var<T>>& features, const Var<T>& guide) {
  if (features.empty()) throw Error("fusion needs at least one feature");
  std::vector<Var<T>> cols;
  cols.reserve(features.size());
  for (const auto& f : features) {
    auto c = cosine_rows(f, guide);
    cols.push_back(reshape(c, {c.dim(0), 1}));
  }
  return concat(cols, 1);
}

template <typename T>
Var<T> fuse(const std::vector<Var<T>>& features, const Var<T>& weights) {
  if (features.empty()) throw Error("fusion needs at least one feature");
  if (weights.rank() != 2 || weights.dim(1) != features.size() ||
      weights.dim(0) != features[0].dim(0)) {
    throw ShapeError("fusion weights " + shape_str(weights.shape()) + " do not match " +
                     std::to_string(features.size()) + " features");
  }
  Var<T> out;
  for (std::size_t k = 0; k < features.size(); ++k) {
    auto term = mul(features[k], slice(weights, 1, k, 1));
    out = out.defined() ? add(out, term) : term;
  }
  return out;
}

template <typename T>
Var<T> fuse_add(const std::vector<Var<T>>& features) {
  if (features.empty()) throw Error("fusion needs at least one feature");
  Var<T> out = features[0];
  for (std::size_t k = 1; k < features.size(); ++k) out = add(out, features[k]);
  return out;
}

template <typename T>
ConcatFusion<T>::ConcatFusion(std::size_t branches, std::size_t dim, Rng& rng)
    : proj(branches * dim, dim, rng) {}

template <typename T>
Var<T> ConcatFusion<T>::forward(const std::vector<Var<T>>& features) const {
  return proj.forward(concat(features, 1));
}

template <typename T>
void ConcatFusion<T>::collect(const std::string& prefix, StateList<T>& out) {
  proj.collect(prefix + ".proj", out);
}

FusionWeights fusion_weights(const std::vector<double>& f_bvfe, const std::vector<double>& f_tcm,
                             const std::vector<double>& f_vbtc, const std::vector<double>& guide) {
  auto row = [](const std::vector<double>& v) {
    return Var<double>::constant(Tensor<double>({1, v.size()}, v));
  };
  auto g = Var<double>::constant(Tensor<double>({guide.size()}, guide));
  auto w = fusion_weights<double>({row(f_bvfe), row(f_tcm), row(f_vbtc)}, g).value();
  return {w[0], w[1], w[2]};
}

template Var<float> fusion_weights(const std::vector<Var<float>>&, const Var<float>&);
template Var<double> fusion_weights(const std::vector<Var<double>>&, const Var<double>&);
template Var<float> fuse(const std::vector<Var<float>>&, const Var<float>&);
template Var<double> fuse(const std::vector<Var<double>>&, const Var<double>&);
template Var<float> fuse_add(const std::vector<Var<float>>&);
template Var<double> fuse_add(const std::vector<Var<double>>&);
template class TextAdapter<float>;
template class TextAdapter<double>;
template class ConcatFusion<float>;
template class ConcatFusion<double>;

}  // namespace dsvqa
