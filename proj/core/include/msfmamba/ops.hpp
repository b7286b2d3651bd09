#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "msfmamba/autodiff.hpp"

namespace msf {

enum class InterpMode { Bilinear, Nearest };

inline constexpr double kDefaultEps = 1e-5;

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);

/// Elementwise (Hadamard) product.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& a, T factor);

/// Sum of all elements, shape [1].
template <typename T>
Var<T> sum(const Var<T>& a);

template <typename T>
Var<T> mean(const Var<T>& a);

/// out[..., j] = sum_i x[..., i] * W[i, j] + b[j]. Pass an undefined Var for no bias.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias = Var<T>());

/// Per-channel 3x3 convolution over x[H, W, C] with zero padding 1 and stride 1 or 2.
/// Output is [ceil(H/stride), ceil(W/stride), C].
template <typename T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& kernel, int stride, const Var<T>& bias = Var<T>());

template <typename T>
Var<T> silu(const Var<T>& x);

/// log(1 + exp(x)) without overflow for large |x|.
template <typename T>
Var<T> softplus(const Var<T>& x);

/// Normalizes over the last axis.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = kDefaultEps);

/// Resamples x[h, w, C] up to [height, width, C] with half-pixel centers
/// (corner alignment off). Identity when the sizes already match.
template <typename T>
Var<T> interpolate_up2(const Var<T>& x, std::size_t height, std::size_t width,
                       InterpMode mode = InterpMode::Bilinear);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// out[k, :] = x[index[k], :] for a rank-2 x.
template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<std::size_t>& index);

template <typename T>
Var<T> transpose2d(const Var<T>& x);

/// Mean over all leading axes of x[..., C], giving [C].
template <typename T>
Var<T> mean_rows(const Var<T>& x);

/// Concatenates two rank-1 tensors.
template <typename T>
Var<T> concat(const Var<T>& a, const Var<T>& b);

/// logsumexp(logits) - logits[label], shape [1].
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::size_t label);

/// Elementwise exp(delta[p, c] * A[c, n]) -> [P, C, N].
template <typename T>
Var<T> exp_outer(const Var<T>& delta, const Var<T>& a);

/// Elementwise delta[p, c] * B[p, n] -> [P, C, N].
template <typename T>
Var<T> scale_outer(const Var<T>& delta, const Var<T>& b);

// Scalar helpers shared with the kernels and tests.
/// Never returns zero: deep negative inputs clamp to the smallest positive subnormal.
template <typename T>
T softplus_value(T x) {
  if (x > T(20)) return x + std::log1p(std::exp(-x));
  const T v = x < T(-20) ? std::exp(x) : std::log1p(std::exp(x));
  return std::max(v, std::numeric_limits<T>::denorm_min());
}

template <typename T>
T sigmoid_value(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace msf
