#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "flexvar/tensor.hpp"

// Low-level numeric kernels shared by the autodiff tape and the cache-based
// inference path. Both paths must call the same kernel for any value they are
// expected to reproduce bit-exactly.
namespace flexvar::kernels {

inline constexpr double kLayerNormEps = 1e-5;

// c[n,m] = a[n,k] * b[k,m]. ikj order; the j loop vectorizes without
// reassociating any single accumulation chain.
template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m) {
  std::fill(c, c + n * m, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// Fixed 16-accumulator dot product; the summation order is part of the
// bit-reproducibility contract shared by the training and inference paths.
// The lane layout lets the compiler map the inner loop onto SIMD FMAs while
// staying fully deterministic.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[16] = {};
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16)
    for (std::size_t l = 0; l < 16; ++l) acc[l] += a[i + l] * b[i + l];
  T tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  T fold8[8], fold4[4];
  for (std::size_t l = 0; l < 8; ++l) fold8[l] = acc[l] + acc[l + 8];
  for (std::size_t l = 0; l < 4; ++l) fold4[l] = fold8[l] + fold8[l + 4];
  return ((fold4[0] + fold4[1]) + (fold4[2] + fold4[3])) + tail;
}

// c[n,m] = a[n,k] * b^T where b is stored (m,k).
template <typename T>
void matmul_bt(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) c[i * m + j] = dot(a + i * k, b + j * k, k);
}

template <typename T>
void add_row_bias(T* x, const T* bias, std::size_t n, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) x[i * m + j] += bias[j];
}

// Normalizes one length-m row; writes xhat (pre-affine) when requested.
template <typename T>
void layer_norm_row(const T* x, const T* gamma, const T* beta, T* y, T* xhat, std::size_t m) {
  T mean = 0;
  for (std::size_t j = 0; j < m; ++j) mean += x[j];
  mean /= static_cast<T>(m);
  T var = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const T d = x[j] - mean;
    var += d * d;
  }
  var /= static_cast<T>(m);
  const T inv = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
  for (std::size_t j = 0; j < m; ++j) {
    const T h = (x[j] - mean) * inv;
    if (xhat) xhat[j] = h;
    y[j] = h * gamma[j] + beta[j];
  }
}

// In-place softmax over x[0..limit); entries at or beyond limit are zeroed.
template <typename T>
void softmax_prefix(T* x, std::size_t limit, std::size_t n) {
  T mx = x[0];
  for (std::size_t j = 1; j < limit; ++j) mx = std::max(mx, x[j]);
  T sum = 0;
  for (std::size_t j = 0; j < limit; ++j) {
    x[j] = std::exp(x[j] - mx);
    sum += x[j];
  }
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < limit; ++j) x[j] *= inv;
  for (std::size_t j = limit; j < n; ++j) x[j] = T(0);
}

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * static_cast<T>(0.7071067811865476)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * static_cast<T>(0.7071067811865476)));
  const T pdf = std::exp(T(-0.5) * x * x) * static_cast<T>(0.3989422804014327);
  return cdf + x * pdf;
}

// Half-pixel-center source coordinate for output index o, with the four
// bilinear taps collapsed to two lerps so constant maps are preserved
// bit-exactly and target==source is the identity.
template <typename T>
struct BilinearTap {
  std::size_t lo, hi;
  T frac;
};

template <typename T>
BilinearTap<T> bilinear_tap(std::size_t o, std::size_t in, std::size_t out) {
  const T src = (static_cast<T>(o) + T(0.5)) * (static_cast<T>(in) / static_cast<T>(out)) - T(0.5);
  const T clamped = std::min(std::max(src, T(0)), static_cast<T>(in - 1));
  const std::size_t lo = static_cast<std::size_t>(clamped);
  const std::size_t hi = std::min(lo + 1, in - 1);
  return {lo, hi, clamped - static_cast<T>(lo)};
}

// dst[C,h2,w2] = bilinear(src[C,h,w]); half-pixel centers, clamped edges.
template <typename T>
void bilinear_resize_chw(const T* src, T* dst, std::size_t C, std::size_t h, std::size_t w,
                         std::size_t h2, std::size_t w2) {
  if (h2 == 0 || w2 == 0) throw std::invalid_argument("bilinear_resize: zero target dimension");
  for (std::size_t c = 0; c < C; ++c) {
    const T* plane = src + c * h * w;
    T* out = dst + c * h2 * w2;
    for (std::size_t y = 0; y < h2; ++y) {
      const auto ty = bilinear_tap<T>(y, h, h2);
      for (std::size_t x = 0; x < w2; ++x) {
        const auto tx = bilinear_tap<T>(x, w, w2);
        const T a = plane[ty.lo * w + tx.lo];
        const T b = plane[ty.lo * w + tx.hi];
        const T cc = plane[ty.hi * w + tx.lo];
        const T d = plane[ty.hi * w + tx.hi];
        const T top = a + tx.frac * (b - a);
        const T bot = cc + tx.frac * (d - cc);
        out[y * w2 + x] = top + ty.frac * (bot - top);
      }
    }
  }
}

// Transpose interpolation: scatters dgrad back through the taps.
template <typename T>
void bilinear_resize_chw_backward(const T* dgrad, T* dsrc, std::size_t C, std::size_t h,
                                  std::size_t w, std::size_t h2, std::size_t w2) {
  for (std::size_t c = 0; c < C; ++c) {
    const T* g = dgrad + c * h2 * w2;
    T* out = dsrc + c * h * w;
    for (std::size_t y = 0; y < h2; ++y) {
      const auto ty = bilinear_tap<T>(y, h, h2);
      for (std::size_t x = 0; x < w2; ++x) {
        const auto tx = bilinear_tap<T>(x, w, w2);
        const T gv = g[y * w2 + x];
        const T wy1 = ty.frac, wy0 = T(1) - ty.frac;
        const T wx1 = tx.frac, wx0 = T(1) - tx.frac;
        out[ty.lo * w + tx.lo] += gv * wy0 * wx0;
        out[ty.lo * w + tx.hi] += gv * wy0 * wx1;
        out[ty.hi * w + tx.lo] += gv * wy1 * wx0;
        out[ty.hi * w + tx.hi] += gv * wy1 * wx1;
      }
    }
  }
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& src, std::size_t h2, std::size_t w2) {
  if (src.rank() != 3) throw std::invalid_argument("bilinear_resize: expected C×h×w");
  if (h2 == 0 || w2 == 0) throw std::invalid_argument("bilinear_resize: zero target dimension");
  Tensor<T> out({src.dim(0), h2, w2});
  bilinear_resize_chw(src.data.data(), out.data.data(), src.dim(0), src.dim(1), src.dim(2), h2,
                      w2);
  return out;
}

}  // namespace flexvar::kernels
