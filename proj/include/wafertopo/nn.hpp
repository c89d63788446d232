#pragma once
// Layer kernels for the embedding network. Everything works on one sample at a
// time in CHW layout and is templated on the scalar type so gradient checks can
// run in double while training runs in float.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "wafertopo/simd.hpp"

namespace wafertopo::nn {

// ---- 3x3 convolution, stride 1, zero padding 1 (im2col) ----

// cols: (C*9) x (H*W); row k = c*9 + ky*3 + kx.
template <typename T>
void im2col3x3(const T* in, int C, int H, int W, T* cols) {
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        const T* plane = in + static_cast<std::size_t>(c) * hw;
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          T* out = row + static_cast<std::size_t>(y) * W;
          if (sy < 0 || sy >= H) {
            std::fill(out, out + W, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(sy) * W;
          for (int x = 0; x < W; ++x) {
            const int sx = x + kx - 1;
            out[x] = (sx < 0 || sx >= W) ? T(0) : src[sx];
          }
        }
      }
}

template <typename T>
void col2im3x3(const T* cols, int C, int H, int W, T* din) {
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        T* plane = din + static_cast<std::size_t>(c) * hw;
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          const T* g = row + static_cast<std::size_t>(y) * W;
          T* dst = plane + static_cast<std::size_t>(sy) * W;
          for (int x = 0; x < W; ++x) {
            const int sx = x + kx - 1;
            if (sx >= 0 && sx < W) dst[sx] += g[x];
          }
        }
      }
}

// out[f] = b[f] + sum_k w[f, k] * cols[k];  w is F x (C*9).
template <typename T>
void conv3x3_forward(const T* cols, int C, int H, int W, const T* w, const T* b, int F, T* out) {
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const std::size_t K = static_cast<std::size_t>(C) * 9;
  for (int f = 0; f < F; ++f) {
    T* o = out + static_cast<std::size_t>(f) * hw;
    std::fill(o, o + hw, b[f]);
    const T* wf = w + static_cast<std::size_t>(f) * K;
    for (std::size_t k = 0; k < K; ++k) simd::axpy(hw, wf[k], cols + k * hw, o);
  }
}

// Accumulates dw, db; writes dcols (may be null when the input gradient is not needed).
template <typename T>
void conv3x3_backward(const T* cols, int C, int H, int W, const T* w, int F, const T* dout, T* dw, T* db, T* dcols) {
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const std::size_t K = static_cast<std::size_t>(C) * 9;
  if (dcols) std::fill(dcols, dcols + K * hw, T(0));
  for (int f = 0; f < F; ++f) {
    const T* g = dout + static_cast<std::size_t>(f) * hw;
    T s = 0;
    for (std::size_t i = 0; i < hw; ++i) s += g[i];
    db[f] += s;
    const T* wf = w + static_cast<std::size_t>(f) * K;
    T* dwf = dw + static_cast<std::size_t>(f) * K;
    for (std::size_t k = 0; k < K; ++k) {
      dwf[k] += simd::dot(hw, g, cols + k * hw);
      if (dcols) simd::axpy(hw, wf[k], g, dcols + k * hw);
    }
  }
}

// ---- ReLU ----

template <typename T>
void relu_forward(const T* in, std::size_t n, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

// Gradient routed where the pre-activation was positive.
template <typename T>
void relu_backward(const T* pre, std::size_t n, const T* dout, T* din) {
  for (std::size_t i = 0; i < n; ++i) din[i] = pre[i] > T(0) ? dout[i] : T(0);
}

// ---- 2x2 max pool, stride 2 (odd trailing row/column dropped) ----

template <typename T>
void maxpool2_forward(const T* in, int C, int H, int W, T* out, std::uint32_t* argmax) {
  const int Ho = H / 2, Wo = W / 2;
  for (int c = 0; c < C; ++c) {
    const T* plane = in + static_cast<std::size_t>(c) * H * W;
    for (int y = 0; y < Ho; ++y)
      for (int x = 0; x < Wo; ++x) {
        std::uint32_t best = static_cast<std::uint32_t>((2 * y) * W + 2 * x);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const auto idx = static_cast<std::uint32_t>((2 * y + dy) * W + 2 * x + dx);
            if (plane[idx] > plane[best]) best = idx;
          }
        const std::size_t o = (static_cast<std::size_t>(c) * Ho + y) * Wo + x;
        out[o] = plane[best];
        argmax[o] = best;
      }
  }
}

template <typename T>
void maxpool2_backward(const std::uint32_t* argmax, int C, int H, int W, const T* dout, T* din) {
  const int Ho = H / 2, Wo = W / 2;
  std::fill(din, din + static_cast<std::size_t>(C) * H * W, T(0));
  for (int c = 0; c < C; ++c)
    for (std::size_t o = 0; o < static_cast<std::size_t>(Ho) * Wo; ++o) {
      const std::size_t oi = static_cast<std::size_t>(c) * Ho * Wo + o;
      din[static_cast<std::size_t>(c) * H * W + argmax[oi]] += dout[oi];
    }
}

// ---- global average pool ----

template <typename T>
void gap_forward(const T* in, int C, int H, int W, T* out) {
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c) {
    T s = 0;
    for (std::size_t i = 0; i < hw; ++i) s += in[c * hw + i];
    out[c] = s / static_cast<T>(hw);
  }
}

template <typename T>
void gap_backward(int C, int H, int W, const T* dout, T* din) {
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c) std::fill(din + c * hw, din + (c + 1) * hw, dout[c] / static_cast<T>(hw));
}

// ---- affine y = W x + b, W is out x in ----

template <typename T>
void affine_forward(const T* x, int in, const T* w, const T* b, int out, T* y) {
  for (int o = 0; o < out; ++o) y[o] = b[o] + simd::dot(static_cast<std::size_t>(in), w + static_cast<std::size_t>(o) * in, x);
}

template <typename T>
void affine_backward(const T* x, int in, const T* w, int out, const T* dy, T* dw, T* db, T* dx) {
  if (dx) std::fill(dx, dx + in, T(0));
  for (int o = 0; o < out; ++o) {
    db[o] += dy[o];
    simd::axpy(static_cast<std::size_t>(in), dy[o], x, dw + static_cast<std::size_t>(o) * in);
    if (dx) simd::axpy(static_cast<std::size_t>(in), dy[o], w + static_cast<std::size_t>(o) * in, dx);
  }
}

// ---- L2 normalization; a zero vector maps to e1 with zero gradient ----

template <typename T>
T l2_normalize_forward(const T* y, int n, T* z) {
  double s = 0;
  for (int i = 0; i < n; ++i) s += static_cast<double>(y[i]) * y[i];
  const double norm = std::sqrt(s);
  if (norm == 0.0) {
    std::fill(z, z + n, T(0));
    if (n > 0) z[0] = T(1);
    return T(0);
  }
  for (int i = 0; i < n; ++i) z[i] = static_cast<T>(y[i] / norm);
  return static_cast<T>(norm);
}

template <typename T>
void l2_normalize_backward(const T* z, T norm, int n, const T* dz, T* dy) {
  if (norm == T(0)) {
    std::fill(dy, dy + n, T(0));
    return;
  }
  T zd = 0;
  for (int i = 0; i < n; ++i) zd += z[i] * dz[i];
  for (int i = 0; i < n; ++i) dy[i] = (dz[i] - z[i] * zd) / norm;
}

}  // namespace wafertopo::nn
