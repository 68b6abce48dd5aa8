#include "dsvqa/ops.h"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>

namespace dsvqa {

namespace {

using Index = std::ptrdiff_t;

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> sa;
  std::vector<std::size_t> sb;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  BroadcastPlan plan;
  const auto stra = strides_of(a);
  const auto strb = strides_of(b);
  plan.out.resize(a.size());
  plan.sa.resize(a.size());
  plan.sb.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1) {
      throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " +
                       shape_str(b));
    }
    plan.out[i] = std::max(a[i], b[i]);
    plan.sa[i] = a[i] == 1 ? 0 : stra[i];
    plan.sb[i] = b[i] == 1 ? 0 : strb[i];
  }
  return plan;
}

// Calls f(out_index, a_offset, b_offset) for every element of `out`.
template <class F>
void broadcast_loop(const Shape& out, const std::vector<std::size_t>& sa,
                    const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t r = out.size();
  if (r == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t n = numel_of(out);
  if (n == 0) return;
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  const std::size_t inner = out[r - 1];
  const std::size_t step_a = sa[r - 1];
  const std::size_t step_b = sb[r - 1];
  for (std::size_t o = 0; o < n; o += inner) {
    std::size_t a = ia;
    std::size_t b = ib;
    for (std::size_t k = 0; k < inner; ++k, a += step_a, b += step_b) f(o + k, a, b);
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

template <typename T, class F, class DA, class DB>
Var<T> binary(const char* name, const Var<T>& a, const Var<T>& b, F f, DA da, DB db) {
  auto plan = plan_broadcast(a.shape(), b.shape(), name);
  Tensor<T> out(plan.out);
  const auto& av = a.value();
  const auto& bv = b.value();
  broadcast_loop(plan.out, plan.sa, plan.sb,
                 [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = f(av[i], bv[j]); });
  Node<T>* an = a.node();
  Node<T>* bn = b.node();
  return make_op<T>(name, std::move(out), {a, b},
                    [an, bn, plan, da, db](const Tensor<T>& g) {
                      const auto& av = an->value;
                      const auto& bv = bn->value;
                      if (an->requires_grad) {
                        Tensor<T> ga(av.shape());
                        broadcast_loop(plan.out, plan.sa, plan.sb,
                                       [&](std::size_t o, std::size_t i, std::size_t j) {
                                         ga[i] += g[o] * da(av[i], bv[j]);
                                       });
                        an->accumulate(ga);
                      }
                      if (bn->requires_grad) {
                        Tensor<T> gb(bv.shape());
                        broadcast_loop(plan.out, plan.sa, plan.sb,
                                       [&](std::size_t o, std::size_t i, std::size_t j) {
                                         gb[j] += g[o] * db(av[i], bv[j]);
                                       });
                        bn->accumulate(gb);
                      }
                    });
}

// Elementwise op whose derivative is a function of the input only.
template <typename T, class F, class DF>
Var<T> unary(const char* name, const Var<T>& x, F f, DF df) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = f(xv[i]);
  Node<T>* xn = x.node();
  return make_op<T>(name, std::move(out), {x}, [xn, df](const Tensor<T>& g) {
    const auto& xv = xn->value;
    Tensor<T> gx(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) gx[i] = g[i] * df(xv[i]);
    xn->accumulate(gx);
  });
}

struct ReducePlan {
  Shape keep;     // output shape with reduced axes kept as 1
  Shape out;      // final output shape
  std::vector<std::size_t> sx;    // contiguous strides of x
  std::vector<std::size_t> sout;  // strides into keep, 0 on reduced axes
  std::size_t count = 1;          // number of reduced elements per output
};

ReducePlan plan_reduce(const Shape& shape, const std::vector<std::size_t>& axes, bool keepdim,
                       const char* op) {
  ReducePlan plan;
  std::vector<bool> reduced(shape.size(), false);
  for (auto ax : axes) {
    if (ax >= shape.size()) {
      throw ShapeError(std::string(op) + ": axis " + std::to_string(ax) + " out of range for " +
                       shape_str(shape));
    }
    reduced[ax] = true;
  }
  plan.keep = shape;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (reduced[i]) {
      plan.count *= shape[i];
      plan.keep[i] = 1;
    } else if (!keepdim) {
      plan.out.push_back(shape[i]);
    }
  }
  if (keepdim) plan.out = plan.keep;
  plan.sx = strides_of(shape);
  plan.sout = strides_of(plan.keep);
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (reduced[i]) plan.sout[i] = 0;
  }
  return plan;
}

// View of a tensor as [outer, length, inner] around one axis.
struct AxisView {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

template <typename T>
void record_signs(const Tensor<T>& x) {
  if (!KinkTrace::active()) return;
  std::uint64_t word = 0;
  std::size_t bit = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (x[i] > T(0)) word |= (std::uint64_t{1} << bit);
    if (++bit == 64) {
      KinkTrace::record(word);
      word = 0;
      bit = 0;
    }
  }
  KinkTrace::record(word);
}

struct ConvGeometry {
  std::size_t n, c, o;
  std::array<std::size_t, 3> in, k, out;
  std::array<std::size_t, 3> stride, pad;
};

ConvGeometry conv_geometry(const Shape& x, const Shape& w, const ConvSpec& spec) {
  if (x.size() != 5 || w.size() != 5) {
    throw ShapeError("conv3d expects 5-D input and weight, got " + shape_str(x) + " and " +
                     shape_str(w));
  }
  if (x[1] != w[1]) {
    throw ShapeError("conv3d channel mismatch: input " + shape_str(x) + ", weight " +
                     shape_str(w));
  }
  ConvGeometry g{};
  g.n = x[0];
  g.c = x[1];
  g.o = w[0];
  for (std::size_t i = 0; i < 3; ++i) {
    g.in[i] = x[2 + i];
    g.k[i] = w[2 + i];
    g.stride[i] = spec.stride[i];
    g.pad[i] = spec.pad[i];
    if (g.stride[i] == 0) throw ShapeError("conv3d stride must be positive");
    if (g.in[i] + 2 * g.pad[i] < g.k[i]) {
      throw ShapeError("conv3d kernel " + shape_str(w) + " does not fit padded input " +
                       shape_str(x));
    }
    g.out[i] = (g.in[i] + 2 * g.pad[i] - g.k[i]) / g.stride[i] + 1;
  }
  return g;
}

// Visits every (output row, input row) pair touched by one kernel tap and
// hands the caller the matching ranges along the innermost axis.
template <class F>
void conv_rows(const ConvGeometry& g, std::size_t k0, std::size_t k1, std::size_t k2, F&& f) {
  const Index p2 = static_cast<Index>(g.pad[2]);
  const Index s2 = static_cast<Index>(g.stride[2]);
  const Index in2 = static_cast<Index>(g.in[2]);
  const Index kk2 = static_cast<Index>(k2);
  // valid od2: 0 <= od2*s2 + k2 - p2 < in2
  Index lo = 0;
  if (p2 > kk2) lo = (p2 - kk2 + s2 - 1) / s2;
  Index hi = (in2 - 1 + p2 - kk2);
  if (hi < 0) return;
  hi = std::min<Index>(hi / s2, static_cast<Index>(g.out[2]) - 1);
  if (lo > hi) return;
  for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
    const Index i0 = static_cast<Index>(o0 * g.stride[0] + k0) - static_cast<Index>(g.pad[0]);
    if (i0 < 0 || i0 >= static_cast<Index>(g.in[0])) continue;
    for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
      const Index i1 = static_cast<Index>(o1 * g.stride[1] + k1) - static_cast<Index>(g.pad[1]);
      if (i1 < 0 || i1 >= static_cast<Index>(g.in[1])) continue;
      const std::size_t out_row = (o0 * g.out[1] + o1) * g.out[2];
      const std::size_t in_row =
          (static_cast<std::size_t>(i0) * g.in[1] + static_cast<std::size_t>(i1)) * g.in[2];
      f(out_row, in_row, lo, hi, lo * s2 + kk2 - p2, s2);
    }
  }
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return binary<T>(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  return unary<T>(
      "scale", x, [factor](T v) { return v * factor; }, [factor](T) { return factor; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T value) {
  return unary<T>(
      "add_scalar", x, [value](T v) { return v + value; }, [](T) { return T(1); });
}

template <typename T>
Var<T> neg(const Var<T>& x) {
  return scale(x, T(-1));
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  record_signs(x.value());
  return unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  return unary<T>(
      "gelu", x,
      [](T v) { return T(0.5) * v * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>)); },
      [](T v) {
        const T cdf = T(0.5) * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>));
        const T pdf = std::exp(T(-0.5) * v * v) * std::numbers::inv_sqrtpi_v<T> /
                      std::numbers::sqrt2_v<T>;
        return cdf + v * pdf;
      });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  auto f = [](T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
  };
  return unary<T>("sigmoid", x, f, [f](T v) {
    const T s = f(v);
    return s * (T(1) - s);
  });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  return unary<T>(
      "exp", x, [](T v) { return std::exp(v); }, [](T v) { return std::exp(v); });
}

template <typename T>
Var<T> sqrt(const Var<T>& x) {
  return unary<T>(
      "sqrt", x, [](T v) { return std::sqrt(v); },
      [](T v) { return T(0.5) / std::sqrt(v); });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return unary<T>(
      "square", x, [](T v) { return v * v; }, [](T v) { return T(2) * v; });
}

template <typename T>
Var<T> sum(const Var<T>& x, const std::vector<std::size_t>& axes, bool keepdim) {
  auto plan = plan_reduce(x.shape(), axes, keepdim, "sum");
  Tensor<T> out(plan.keep);
  const auto& xv = x.value();
  broadcast_loop(x.shape(), plan.sx, plan.sout,
                 [&](std::size_t, std::size_t i, std::size_t o) { out[o] += xv[i]; });
  out = out.reshaped(plan.out);
  Node<T>* xn = x.node();
  return make_op<T>("sum", std::move(out), {x}, [xn, plan](const Tensor<T>& g) {
    Tensor<T> gx(xn->value.shape());
    broadcast_loop(xn->value.shape(), plan.sx, plan.sout,
                   [&](std::size_t, std::size_t i, std::size_t o) { gx[i] = g[o]; });
    xn->accumulate(gx);
  });
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
  std::vector<std::size_t> axes(x.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  return sum(x, axes, false);
}

template <typename T>
Var<T> mean(const Var<T>& x, const std::vector<std::size_t>& axes, bool keepdim) {
  auto plan = plan_reduce(x.shape(), axes, keepdim, "mean");
  if (plan.count == 0) throw ShapeError("mean over an empty axis");
  return scale(sum(x, axes, keepdim), T(1) / static_cast<T>(plan.count));
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  std::vector<std::size_t> axes(x.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  return mean(x, axes, false);
}

template <typename T>
Var<T> amax(const Var<T>& x, const std::vector<std::size_t>& axes, bool keepdim) {
  auto plan = plan_reduce(x.shape(), axes, keepdim, "amax");
  if (plan.count == 0) throw ShapeError("amax over an empty axis");
  const auto& xv = x.value();
  const std::size_t n_out = numel_of(plan.keep);
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> arg(n_out, kUnset);
  broadcast_loop(x.shape(), plan.sx, plan.sout, [&](std::size_t, std::size_t i, std::size_t o) {
    if (arg[o] == kUnset || xv[i] > xv[arg[o]]) arg[o] = i;
  });
  Tensor<T> out(plan.out);
  for (std::size_t o = 0; o < n_out; ++o) {
    out[o] = xv[arg[o]];
    KinkTrace::record(arg[o]);
  }
  Node<T>* xn = x.node();
  return make_op<T>("amax", std::move(out), {x}, [xn, arg](const Tensor<T>& g) {
    Tensor<T> gx(xn->value.shape());
    for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += g[o];
    xn->accumulate(gx);
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const auto v = axis_view(x.shape(), axis, "softmax");
  if (v.length == 0) throw ShapeError("softmax over an empty axis");
  const auto& xv = x.value();
  Tensor<T> out(x.shape());
  for (std::size_t a = 0; a < v.outer; ++a) {
    for (std::size_t c = 0; c < v.inner; ++c) {
      const std::size_t base = a * v.length * v.inner + c;
      T m = xv[base];
      for (std::size_t l = 1; l < v.length; ++l) m = std::max(m, xv[base + l * v.inner]);
      T total = 0;
      for (std::size_t l = 0; l < v.length; ++l) {
        const T e = std::exp(xv[base + l * v.inner] - m);
        out[base + l * v.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < v.length; ++l) out[base + l * v.inner] /= total;
    }
  }
  Tensor<T> y = out;
  Node<T>* xn = x.node();
  return make_op<T>("softmax", std::move(out), {x}, [xn, v, y](const Tensor<T>& g) {
    Tensor<T> gx(y.shape());
    for (std::size_t a = 0; a < v.outer; ++a) {
      for (std::size_t c = 0; c < v.inner; ++c) {
        const std::size_t base = a * v.length * v.inner + c;
        T dot = 0;
        for (std::size_t l = 0; l < v.length; ++l) {
          dot += g[base + l * v.inner] * y[base + l * v.inner];
        }
        for (std::size_t l = 0; l < v.length; ++l) {
          const std::size_t i = base + l * v.inner;
          gx[i] = y[i] * (g[i] - dot);
        }
      }
    }
    xn->accumulate(gx);
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  Node<T>* xn = x.node();
  return make_op<T>("reshape", std::move(out), {x}, [xn](const Tensor<T>& g) {
    xn->accumulate(g.reshaped(xn->value.shape()));
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat of zero tensors");
  Shape out_shape = xs[0].shape();
  if (axis >= out_shape.size()) throw ShapeError("concat axis out of range");
  std::size_t total = 0;
  for (const auto& x : xs) {
    const auto& s = x.shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != out_shape[i]) {
        throw ShapeError("concat shape mismatch: " + shape_str(s) + " vs " +
                         shape_str(out_shape));
      }
    }
    total += s[axis];
  }
  out_shape[axis] = total;
  const auto v = axis_view(out_shape, axis, "concat");
  Tensor<T> out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& x : xs) {
    offsets.push_back(off);
    const std::size_t len = x.dim(axis);
    const auto& xv = x.value();
    for (std::size_t a = 0; a < v.outer; ++a) {
      std::copy_n(xv.data().begin() + a * len * v.inner, len * v.inner,
                  out.data().begin() + (a * v.length + off) * v.inner);
    }
    off += len;
  }
  std::vector<Node<T>*> nodes;
  for (const auto& x : xs) nodes.push_back(x.node());
  return make_op<T>("concat", std::move(out), xs, [nodes, offsets, axis, v](const Tensor<T>& g) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      Node<T>* n = nodes[k];
      if (!n->requires_grad) continue;
      const std::size_t len = n->value.dim(axis);
      Tensor<T> gx(n->value.shape());
      for (std::size_t a = 0; a < v.outer; ++a) {
        std::copy_n(g.data().begin() + (a * v.length + offsets[k]) * v.inner, len * v.inner,
                    gx.data().begin() + a * len * v.inner);
      }
      n->accumulate(gx);
    }
  });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto v = axis_view(x.shape(), axis, "slice");
  if (start + length > v.length) throw ShapeError("slice out of range");
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  Tensor<T> out(out_shape);
  const auto& xv = x.value();
  for (std::size_t a = 0; a < v.outer; ++a) {
    std::copy_n(xv.data().begin() + (a * v.length + start) * v.inner, length * v.inner,
                out.data().begin() + a * length * v.inner);
  }
  Node<T>* xn = x.node();
  return make_op<T>("slice", std::move(out), {x}, [xn, v, start, length](const Tensor<T>& g) {
    Tensor<T> gx(xn->value.shape());
    for (std::size_t a = 0; a < v.outer; ++a) {
      std::copy_n(g.data().begin() + a * length * v.inner, length * v.inner,
                  gx.data().begin() + (a * v.length + start) * v.inner);
    }
    xn->accumulate(gx);
  });
}

namespace {

template <typename T>
Tensor<T> segment_mean_values(const Tensor<T>& x, const AxisView& v, std::size_t window) {
  Tensor<T> out(x.shape());
  for (std::size_t a = 0; a < v.outer; ++a) {
    for (std::size_t start = 0; start < v.length; start += window) {
      const std::size_t end = std::min(v.length, start + window);
      const T inv = T(1) / static_cast<T>(end - start);
      for (std::size_t c = 0; c < v.inner; ++c) {
        T acc = 0;
        for (std::size_t l = start; l < end; ++l) acc += x[(a * v.length + l) * v.inner + c];
        acc *= inv;
        for (std::size_t l = start; l < end; ++l) out[(a * v.length + l) * v.inner + c] = acc;
      }
    }
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> segment_mean(const Var<T>& x, std::size_t axis, std::size_t window) {
  const auto v = axis_view(x.shape(), axis, "segment_mean");
  if (v.length == 0) throw ShapeError("segment_mean over an empty axis");
  if (window == 0 || window > v.length) window = v.length;
  Node<T>* xn = x.node();
  // The windowed mean is an orthogonal projection, so it is its own adjoint.
  return make_op<T>("segment_mean", segment_mean_values(x.value(), v, window), {x},
                    [xn, v, window](const Tensor<T>& g) {
                      xn->accumulate(segment_mean_values(g, v, window));
                    });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  Tensor<T> out({m, n});
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T s = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += s * bv[p * n + j];
    }
  }
  Node<T>* an = a.node();
  Node<T>* bn = b.node();
  return make_op<T>("matmul", std::move(out), {a, b}, [an, bn, m, k, n](const Tensor<T>& g) {
    const auto& av = an->value;
    const auto& bv = bn->value;
    if (an->requires_grad) {
      Tensor<T> ga({m, k});
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] = acc;
        }
      }
      an->accumulate(ga);
    }
    if (bn->requires_grad) {
      Tensor<T> gb({k, n});
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const T s = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += s * g[i * n + j];
        }
      }
      bn->accumulate(gb);
    }
  });
}

template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const ConvSpec& spec) {
  const ConvGeometry g = conv_geometry(x.shape(), w.shape(), spec);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.o)) {
    throw ShapeError("conv3d bias must have length " + std::to_string(g.o));
  }
  const std::size_t in_vol = g.in[0] * g.in[1] * g.in[2];
  const std::size_t out_vol = g.out[0] * g.out[1] * g.out[2];
  const std::size_t kvol = g.k[0] * g.k[1] * g.k[2];
  Tensor<T> out({g.n, g.o, g.out[0], g.out[1], g.out[2]});
  const T* xd = x.value().data().data();
  const T* wd = w.value().data().data();
  T* od = out.data().data();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t o = 0; o < g.o; ++o) {
      T* oplane = od + (n * g.o + o) * out_vol;
      if (bias.defined()) std::fill_n(oplane, out_vol, bias.value()[o]);
      for (std::size_t c = 0; c < g.c; ++c) {
        const T* iplane = xd + (n * g.c + c) * in_vol;
        const T* wk = wd + (o * g.c + c) * kvol;
        for (std::size_t k0 = 0; k0 < g.k[0]; ++k0) {
          for (std::size_t k1 = 0; k1 < g.k[1]; ++k1) {
            for (std::size_t k2 = 0; k2 < g.k[2]; ++k2) {
              const T wv = wk[(k0 * g.k[1] + k1) * g.k[2] + k2];
              if (wv == T(0)) continue;
              conv_rows(g, k0, k1, k2,
                        [&](std::size_t orow, std::size_t irow, Index lo, Index hi, Index i_lo,
                            Index s) {
                          T* po = oplane + orow;
                          const T* pi = iplane + irow + i_lo;
                          for (Index q = lo; q <= hi; ++q, pi += s) po[q] += wv * *pi;
                        });
            }
          }
        }
      }
    }
  }
  Node<T>* xn = x.node();
  Node<T>* wn = w.node();
  Node<T>* bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Var<T>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_op<T>(
      "conv3d", std::move(out), inputs, [xn, wn, bn, g, in_vol, out_vol, kvol](const Tensor<T>& go) {
        const T* xd = xn->value.data().data();
        const T* wd = wn->value.data().data();
        const T* gd = go.data().data();
        Tensor<T> gx;
        Tensor<T> gw;
        if (xn->requires_grad) gx = Tensor<T>(xn->value.shape());
        if (wn->requires_grad) gw = Tensor<T>(wn->value.shape());
        for (std::size_t n = 0; n < g.n; ++n) {
          for (std::size_t o = 0; o < g.o; ++o) {
            const T* gplane = gd + (n * g.o + o) * out_vol;
            for (std::size_t c = 0; c < g.c; ++c) {
              const T* iplane = xd + (n * g.c + c) * in_vol;
              const std::size_t wbase = (o * g.c + c) * kvol;
              for (std::size_t k0 = 0; k0 < g.k[0]; ++k0) {
                for (std::size_t k1 = 0; k1 < g.k[1]; ++k1) {
                  for (std::size_t k2 = 0; k2 < g.k[2]; ++k2) {
                    const std::size_t wi = wbase + (k0 * g.k[1] + k1) * g.k[2] + k2;
                    const T wv = wd[wi];
                    T acc = 0;
                    const bool need_x = xn->requires_grad && wv != T(0);
                    T* gxplane = need_x ? gx.data().data() + (n * g.c + c) * in_vol : nullptr;
                    conv_rows(g, k0, k1, k2,
                              [&](std::size_t orow, std::size_t irow, Index lo, Index hi,
                                  Index i_lo, Index s) {
                                const T* pg = gplane + orow;
                                if (wn->requires_grad) {
                                  const T* pi = iplane + irow + i_lo;
                                  for (Index q = lo; q <= hi; ++q, pi += s) acc += pg[q] * *pi;
                                }
                                if (need_x) {
                                  T* px = gxplane + irow + i_lo;
                                  for (Index q = lo; q <= hi; ++q, px += s) *px += wv * pg[q];
                                }
                              });
                    if (wn->requires_grad) gw[wi] += acc;
                  }
                }
              }
            }
          }
        }
        if (xn->requires_grad) xn->accumulate(gx);
        if (wn->requires_grad) wn->accumulate(gw);
        if (bn && bn->requires_grad) {
          Tensor<T> gb({g.o});
          for (std::size_t n = 0; n < g.n; ++n) {
            for (std::size_t o = 0; o < g.o; ++o) {
              const T* gplane = gd + (n * g.o + o) * out_vol;
              T acc = 0;
              for (std::size_t i = 0; i < out_vol; ++i) acc += gplane[i];
              gb[o] += acc;
            }
          }
          bn->accumulate(gb);
        }
      });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
              std::array<std::size_t, 2> stride, std::array<std::size_t, 2> pad) {
  if (w.rank() != 4) throw ShapeError("conv2d weight must be 4-D, got " + shape_str(w.shape()));
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) {
    throw ShapeError("conv2d input must be 3-D or 4-D, got " + shape_str(x.shape()));
  }
  const std::size_t n = batched ? x.dim(0) : 1;
  const std::size_t off = batched ? 1 : 0;
  auto x5 = reshape(x, {n, x.dim(off), 1, x.dim(off + 1), x.dim(off + 2)});
  auto w5 = reshape(w, {w.dim(0), w.dim(1), 1, w.dim(2), w.dim(3)});
  ConvSpec spec;
  spec.stride = {1, stride[0], stride[1]};
  spec.pad = {0, pad[0], pad[1]};
  auto y = conv3d(x5, w5, bias, spec);
  if (batched) return reshape(y, {n, y.dim(1), y.dim(3), y.dim(4)});
  return reshape(y, {y.dim(1), y.dim(3), y.dim(4)});
}

template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t pad) {
  if (w.rank() != 3) throw ShapeError("conv1d weight must be 3-D, got " + shape_str(w.shape()));
  const bool batched = x.rank() == 3;
  if (!batched && x.rank() != 2) {
    throw ShapeError("conv1d input must be 2-D or 3-D, got " + shape_str(x.shape()));
  }
  const std::size_t n = batched ? x.dim(0) : 1;
  const std::size_t off = batched ? 1 : 0;
  auto x5 = reshape(x, {n, x.dim(off), 1, 1, x.dim(off + 1)});
  auto w5 = reshape(w, {w.dim(0), w.dim(1), 1, 1, w.dim(2)});
  ConvSpec spec;
  spec.pad = {0, 0, pad};
  auto y = conv3d(x5, w5, bias, spec);
  if (batched) return reshape(y, {n, y.dim(1), y.dim(4)});
  return reshape(y, {y.dim(1), y.dim(4)});
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormState<T>* state, bool training, T momentum, T eps) {
  if (x.rank() < 2) throw ShapeError("batch_norm expects N x C x ... input");
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  std::size_t inner = 1;
  for (std::size_t i = 2; i < x.rank(); ++i) inner *= x.dim(i);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("batch_norm affine parameters must have length " + std::to_string(c));
  }
  const std::size_t m = n * inner;
  if (training && m < 2) {
    throw ShapeError("batch_norm in training mode needs at least 2 values per channel, got " +
                     std::to_string(m) + " for input " + shape_str(x.shape()));
  }
  const auto& xv = x.value();
  std::vector<T> mu(c);
  std::vector<T> inv_std(c);
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      T acc = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv.data().data() + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) acc += p[i];
      }
      const T mean_v = acc / static_cast<T>(m);
      T var = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv.data().data() + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) var += (p[i] - mean_v) * (p[i] - mean_v);
      }
      var /= static_cast<T>(m);
      mu[ch] = mean_v;
      inv_std[ch] = T(1) / std::sqrt(var + eps);
      if (state) {
        const T unbiased = var * static_cast<T>(m) / static_cast<T>(m - 1);
        state->running_mean[ch] = (T(1) - momentum) * state->running_mean[ch] + momentum * mean_v;
        state->running_var[ch] = (T(1) - momentum) * state->running_var[ch] + momentum * unbiased;
      }
    }
  } else {
    if (!state) throw Error("batch_norm in eval mode needs running statistics");
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = state->running_mean[ch];
      inv_std[ch] = T(1) / std::sqrt(state->running_var[ch] + eps);
    }
  }
  Tensor<T> xhat(x.shape());
  Tensor<T> out(x.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const T h = (xv[base + i] - mu[ch]) * inv_std[ch];
        xhat[base + i] = h;
        out[base + i] = gv[ch] * h + bv[ch];
      }
    }
  }
  Node<T>* xn = x.node();
  Node<T>* gn = gamma.node();
  Node<T>* bn = beta.node();
  return make_op<T>(
      "batch_norm", std::move(out), {x, gamma, beta},
      [xn, gn, bn, xhat = std::move(xhat), inv_std, n, c, inner, m, training](const Tensor<T>& g) {
        std::vector<T> sum_g(c, T(0));
        std::vector<T> sum_gx(c, T(0));
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (b * c + ch) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              sum_g[ch] += g[base + i];
              sum_gx[ch] += g[base + i] * xhat[base + i];
            }
          }
        }
        if (gn->requires_grad) gn->accumulate(Tensor<T>({c}, sum_gx));
        if (bn->requires_grad) bn->accumulate(Tensor<T>({c}, sum_g));
        if (xn->requires_grad) {
          Tensor<T> gx(xn->value.shape());
          const auto& gv = gn->value;
          const T mm = static_cast<T>(m);
          for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t base = (b * c + ch) * inner;
              const T k = gv[ch] * inv_std[ch];
              for (std::size_t i = 0; i < inner; ++i) {
                if (training) {
                  gx[base + i] =
                      k * (g[base + i] - sum_g[ch] / mm - xhat[base + i] * sum_gx[ch] / mm);
                } else {
                  gx[base + i] = k * g[base + i];
                }
              }
            }
          }
          xn->accumulate(gx);
        }
      });
}

template <typename T>
Var<T> l2_norm(const Var<T>& x) {
  return sqrt(sum_all(square(x)));
}

template <typename T>
Var<T> cosine_rows(const Var<T>& a, const Var<T>& b) {
  if (a.rank() != 2) throw ShapeError("cosine_rows expects B x D rows, got " + shape_str(a.shape()));
  const std::size_t d = a.dim(1);
  Var<T> b2 = b;
  if (b.rank() == 1) b2 = reshape(b, {1, b.dim(0)});
  if (b2.rank() != 2 || b2.dim(1) != d || (b2.dim(0) != 1 && b2.dim(0) != a.dim(0))) {
    throw ShapeError("cosine_rows shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  auto dot = sum(mul(a, b2), {1});
  auto na = sqrt(sum(square(a), {1}));
  auto nb = sqrt(sum(square(b2), {1}));
  for (const auto* t : {&na.value(), &nb.value()}) {
    for (std::size_t i = 0; i < t->numel(); ++i) {
      if (!((*t)[i] > static_cast<T>(kNormEps))) {
        throw NumericError("cosine similarity of a zero-norm vector");
      }
    }
  }
  return div(dot, mul(na, nb));
}

template <typename T>
Var<T> cosine_similarity(const Var<T>& a, const Var<T>& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.dim(0) != b.dim(0)) {
    throw ShapeError("cosine_similarity expects two vectors of equal length");
  }
  return reshape(cosine_rows(reshape(a, {1, a.dim(0)}), b), {});
}

#define DSVQA_INSTANTIATE_OPS(T)                                                              \
  template Var<T> add(const Var<T>&, const Var<T>&);                                          \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                          \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                          \
  template Var<T> div(const Var<T>&, const Var<T>&);                                          \
  template Var<T> scale(const Var<T>&, T);                                                    \
  template Var<T> add_scalar(const Var<T>&, T);                                               \
  template Var<T> neg(const Var<T>&);                                                         \
  template Var<T> relu(const Var<T>&);                                                        \
  template Var<T> gelu(const Var<T>&);                                                        \
  template Var<T> sigmoid(const Var<T>&);                                                     \
  template Var<T> exp(const Var<T>&);                                                         \
  template Var<T> sqrt(const Var<T>&);                                                        \
  template Var<T> square(const Var<T>&);                                                      \
  template Var<T> sum(const Var<T>&, const std::vector<std::size_t>&, bool);                  \
  template Var<T> sum_all(const Var<T>&);                                                     \
  template Var<T> mean(const Var<T>&, const std::vector<std::size_t>&, bool);                 \
  template Var<T> mean_all(const Var<T>&);                                                    \
  template Var<T> amax(const Var<T>&, const std::vector<std::size_t>&, bool);                 \
  template Var<T> softmax(const Var<T>&, std::size_t);                                        \
  template Var<T> reshape(const Var<T>&, Shape);                                              \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                            \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);                \
  template Var<T> segment_mean(const Var<T>&, std::size_t, std::size_t);                      \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                       \
  template Var<T> conv3d(const Var<T>&, const Var<T>&, const Var<T>&, const ConvSpec&);       \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&,                         \
                         std::array<std::size_t, 2>, std::array<std::size_t, 2>);             \
  template Var<T> conv1d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t);           \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&,                     \
                             BatchNormState<T>*, bool, T, T);                                 \
  template Var<T> cosine_rows(const Var<T>&, const Var<T>&);                                  \
  template Var<T> cosine_similarity(const Var<T>&, const Var<T>&);                            \
  template Var<T> l2_norm(const Var<T>&);

DSVQA_INSTANTIATE_OPS(float)
DSVQA_INSTANTIATE_OPS(double)

}  // namespace dsvqa
