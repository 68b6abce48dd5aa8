#include "dsvqa/grad_suite.h"

#include <chrono>
#include <cmath>

#include "dsvqa/model.h"

namespace dsvqa {

namespace {

using D = double;

Tensor<D> random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
  Tensor<D> t(std::move(shape));
  for (auto& v : t.data()) v = normal(rng, 0.0, sd);
  return t;
}

/// Gives all-zero parameters (biases, the calibration head) random values.
void randomize_zeros(StateList<D>& state, Rng& rng) {
  for (auto& [name, p] : state.params) {
    auto& v = p->value();
    bool zero = true;
    for (D x : v.data()) zero = zero && x == 0.0;
    if (!zero) continue;
    for (auto& x : v.data()) x = uniform(rng, -0.2, 0.2);
  }
}

/// Smooth scalar readout of an arbitrary-shaped output, scaled to O(1) so
/// the rounding noise of the probes stays small.
Var<D> readout(const Var<D>& out, const Tensor<D>& weights) {
  const D norm = 1.0 / std::sqrt(static_cast<D>(weights.numel()));
  return scale(sum_all(mul(out, Var<D>::constant(weights))), norm);
}

template <typename Fn>
ModuleCheck timed(const std::string& module, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  ModuleCheck m;
  m.module = module;
  m.report = fn();
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

}  // namespace

std::vector<ModuleCheck> run_grad_suite(const GradSuiteOptions& o) {
  Rng rng(o.seed);
  const RunMode mode{true, false};  // batch statistics, no running-stat side effects
  const std::size_t b = o.batch;
  const std::size_t t = o.frames;
  std::vector<ModuleCheck> out;

  const auto frames = random_tensor({b, t, o.dim, 2, 2}, rng);
  const auto clip = random_tensor({b, 3, t, o.spatial, o.spatial}, rng);
  const auto local = random_tensor({b, o.fragment_channels, t, 4, 4}, rng);

  {
    VbtcHead<D> head(VbtcConfig{o.dim, 4, 0.4}, rng);
    StateList<D> st;
    head.collect("vbtc", st);
    randomize_zeros(st, rng);
    const auto w = random_tensor({b, o.dim}, rng);
    out.push_back(timed("vbtc", [&] {
      return grad_check([&] { return readout(head.forward(Var<D>::constant(frames), mode), w); },
                        st.params, o.check);
    }));
  }
  for (TemporalConv kind : {TemporalConv::kTada, TemporalConv::kC3d, TemporalConv::kR2plus1d}) {
    TcmConfig cfg;
    cfg.out_dim = o.dim;
    cfg.temporal = kind;
    TcmHead<D> head(cfg, rng);
    StateList<D> st;
    head.collect("tcm", st);
    randomize_zeros(st, rng);
    const auto w = random_tensor({b, o.dim}, rng);
    out.push_back(timed("tcm." + to_string(kind), [&] {
      return grad_check([&] { return readout(head.forward(Var<D>::constant(clip), mode), w); },
                        st.params, o.check);
    }));
  }
  {
    BvfeHead<D> head(BvfeConfig{o.fragment_channels, o.dim}, rng);
    StateList<D> st;
    head.collect("bvfe", st);
    randomize_zeros(st, rng);
    const auto w = random_tensor({b, o.dim}, rng);
    out.push_back(timed("bvfe", [&] {
      return grad_check([&] { return readout(head.forward(Var<D>::constant(local)), w); },
                        st.params, o.check);
    }));
  }
  {
    TextAdapter<D> adapter(o.dim, 0.4, rng);
    StateList<D> st;
    adapter.collect("text_adapter", st);
    randomize_zeros(st, rng);
    const auto x = random_tensor({3, o.dim}, rng);
    const auto w = random_tensor({3, o.dim}, rng);
    out.push_back(timed("fusion.text_adapter", [&] {
      return grad_check([&] { return readout(adapter.forward(Var<D>::constant(x)), w); },
                        st.params, o.check);
    }));
  }
  {
    ConcatFusion<D> fusion(3, o.dim, rng);
    StateList<D> st;
    fusion.collect("concat", st);
    randomize_zeros(st, rng);
    std::vector<Var<D>> feats;
    for (int k = 0; k < 3; ++k) feats.push_back(Var<D>::constant(random_tensor({b, o.dim}, rng)));
    const auto w = random_tensor({b, o.dim}, rng);
    out.push_back(timed("fusion.concat", [&] {
      return grad_check([&] { return readout(fusion.forward(feats), w); }, st.params, o.check);
    }));
  }
  {
    // Loss gradient with respect to the predictions themselves, plus a constant
    // batch where only the variance guard keeps the loss finite. There the
    // curvature scale is sqrt(eps), so the probe step must sit well below it.
    Parameter<D> pred(random_tensor({8}, rng));
    Parameter<D> flat(Tensor<D>::full({8}, 0.5));
    auto guard_options = o.check;
    guard_options.step = 1e-9;
    const auto gt = random_tensor({8}, rng);
    out.push_back(timed("scoring.plcc_loss", [&] {
      auto report = grad_check([&] { return plcc_loss(pred.var(), gt); }, {{"pred", &pred}},
                               o.check);
      auto guarded = grad_check([&] { return plcc_loss(flat.var(), gt); }, {{"flat", &flat}},
                                guard_options);
      report.params.insert(report.params.end(), guarded.params.begin(), guarded.params.end());
      return report;
    }));
  }
  {
    ModelConfig cfg;
    cfg.dim = o.dim;
    cfg.fragment_channels = o.fragment_channels;
    QualityModel<D> model(cfg, rng);
    auto st = model.state();
    randomize_zeros(st, rng);
    Batch<D> batch{frames, clip, local};
    TextEmbeddingSet<D> text{random_tensor({o.dim}, rng), random_tensor({o.dim}, rng),
                             random_tensor({o.dim}, rng)};
    const auto gt = random_tensor({b}, rng);
    out.push_back(timed("model", [&] {
      return grad_check([&] { return plcc_loss(model.forward(batch, text, mode).q, gt); },
                        st.params, o.check);
    }));
  }
  return out;
}

}  // namespace dsvqa
