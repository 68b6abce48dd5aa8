#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "dsvqa/autograd.h"

namespace dsvqa {

// Binary ops broadcast over equal-rank operands where one extent is 1.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);

template <typename T> Var<T> scale(const Var<T>& x, T factor);
template <typename T> Var<T> add_scalar(const Var<T>& x, T value);
template <typename T> Var<T> neg(const Var<T>& x);

template <typename T> Var<T> relu(const Var<T>& x);
/// Exact (erf) GELU.
template <typename T> Var<T> gelu(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> exp(const Var<T>& x);
template <typename T> Var<T> sqrt(const Var<T>& x);
template <typename T> Var<T> square(const Var<T>& x);

template <typename T>
Var<T> sum(const Var<T>& x, const std::vector<std::size_t>& axes, bool keepdim = false);
template <typename T> Var<T> sum_all(const Var<T>& x);
template <typename T>
Var<T> mean(const Var<T>& x, const std::vector<std::size_t>& axes, bool keepdim = false);
template <typename T> Var<T> mean_all(const Var<T>& x);
/// Maximum over axes. Gradient flows to the first maximal element.
template <typename T>
Var<T> amax(const Var<T>& x, const std::vector<std::size_t>& axes, bool keepdim = false);

template <typename T> Var<T> softmax(const Var<T>& x, std::size_t axis);

template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis);
template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length);
/// Replaces every element with the mean of its window along `axis`. Windows
/// are consecutive non-overlapping runs of `window` elements (the last run may
/// be shorter); window 0 means the whole axis.
template <typename T> Var<T> segment_mean(const Var<T>& x, std::size_t axis, std::size_t window);

template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);

struct ConvSpec {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};
};

/// Batched cross-correlation over three spatial axes.
/// x: N x C x D1 x D2 x D3, w: O x C x K1 x K2 x K3, bias: O or undefined.
template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const ConvSpec& spec);
/// x: [N x] C x H x W, w: O x C x KH x KW.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
              std::array<std::size_t, 2> stride, std::array<std::size_t, 2> pad);
/// x: [N x] C x L, w: O x C x K. Stride 1.
template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t pad);

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

/// Per-channel normalization over every axis except 1. In training mode batch
/// statistics are used (and, when `state` is given, folded into the running
/// statistics); in eval mode the running statistics are used.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormState<T>* state, bool training, T momentum, T eps);

/// Row-wise cosine similarity. a: B x D; b: D or B x D. Returns B.
/// Throws NumericError when any norm is below 1e-12.
template <typename T> Var<T> cosine_rows(const Var<T>& a, const Var<T>& b);
/// Cosine similarity of two vectors as a scalar.
template <typename T> Var<T> cosine_similarity(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> l2_norm(const Var<T>& x);

inline constexpr double kNormEps = 1e-12;

}  // namespace dsvqa
