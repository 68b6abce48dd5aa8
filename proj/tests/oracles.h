#pragma once

// Independent reference implementations used by the tests. They share no
// code with the library: plain nested loops in long double.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dsvqa/tensor.h"

namespace oracle {

using dsvqa::Shape;
using dsvqa::Tensor;
using LD = long double;

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double sd = 1.0) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, sd);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline Tensor<double> matmul(const Tensor<double>& a, const Tensor<double>& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<double> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      LD s = 0;
      for (std::size_t p = 0; p < k; ++p) s += LD(a[i * k + p]) * LD(b[p * n + j]);
      out[i * n + j] = static_cast<double>(s);
    }
  }
  return out;
}

/// Cross-correlation of x (N x C x D1 x D2 x D3) with w (O x C x K1 x K2 x K3).
inline Tensor<double> conv3d(const Tensor<double>& x, const Tensor<double>& w,
                             const std::vector<double>& bias, std::array<std::size_t, 3> stride,
                             std::array<std::size_t, 3> pad) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t in[3] = {x.dim(2), x.dim(3), x.dim(4)};
  const std::size_t o = w.dim(0);
  const std::size_t k[3] = {w.dim(2), w.dim(3), w.dim(4)};
  std::size_t out[3];
  for (int a = 0; a < 3; ++a) out[a] = (in[a] + 2 * pad[a] - k[a]) / stride[a] + 1;
  Tensor<double> y({n, o, out[0], out[1], out[2]});
  auto xi = [&](std::size_t b, std::size_t ch, long p, long q, long r) -> LD {
    if (p < 0 || q < 0 || r < 0 || p >= long(in[0]) || q >= long(in[1]) || r >= long(in[2])) return 0;
    return x[(((b * c + ch) * in[0] + p) * in[1] + q) * in[2] + r];
  };
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t p = 0; p < out[0]; ++p)
        for (std::size_t q = 0; q < out[1]; ++q)
          for (std::size_t r = 0; r < out[2]; ++r) {
            LD s = bias.empty() ? 0 : bias[oc];
            for (std::size_t ch = 0; ch < c; ++ch)
              for (std::size_t i = 0; i < k[0]; ++i)
                for (std::size_t j = 0; j < k[1]; ++j)
                  for (std::size_t l = 0; l < k[2]; ++l) {
                    const long pp = long(p * stride[0] + i) - long(pad[0]);
                    const long qq = long(q * stride[1] + j) - long(pad[1]);
                    const long rr = long(r * stride[2] + l) - long(pad[2]);
                    s += xi(b, ch, pp, qq, rr) *
                         LD(w[(((oc * c + ch) * k[0] + i) * k[1] + j) * k[2] + l]);
                  }
            y[(((b * o + oc) * out[0] + p) * out[1] + q) * out[2] + r] = static_cast<double>(s);
          }
  return y;
}

inline LD pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  LD ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= LD(n);
  mb /= LD(n);
  LD sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Ranks obtained by enumerating every ordering of the indices that sorts
/// the values, assigning positions as ranks, and averaging over orderings.
inline std::vector<double> brute_force_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<LD> total(n, 0);
  LD count = 0;
  do {
    bool sorted = true;
    for (std::size_t i = 1; i < n && sorted; ++i) sorted = v[perm[i - 1]] <= v[perm[i]];
    if (!sorted) continue;
    for (std::size_t pos = 0; pos < n; ++pos) total[perm[pos]] += LD(pos + 1);
    count += 1;
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = static_cast<double>(total[i] / count);
  return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return static_cast<double>(pearson(brute_force_ranks(a), brute_force_ranks(b)));
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  LD d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += LD(a[i]) * b[i];
    na += LD(a[i]) * a[i];
    nb += LD(b[i]) * b[i];
  }
  return static_cast<double>(d / std::sqrt(na * nb));
}

}  // namespace oracle
