// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

// Reference float32 kernels. Plain loops; accumulation happens in double so the
// results are stable enough to serve as the accuracy baseline.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "chanq/error.hpp"
#include "chanq/tensor.hpp"

namespace chanq {

struct Hw {
  std::size_t h = 1;
  std::size_t w = 1;
  friend bool operator==(const Hw&, const Hw&) = default;
};

enum class PoolKind { max, avg };

/// floor((in + 2*pad - k) / stride) + 1, or a ShapeError when that is < 1.
inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ShapeError("stride must be positive");
  if (in + 2 * pad < k) {
    throw ShapeError("window " + std::to_string(k) + " exceeds padded extent " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace detail

inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Hw stride, Hw pad) {
  detail::require(input.rank() == 4, "conv2d: input must be NCHW, got " + to_string(input.dims()));
  detail::require(kernel.rank() == 4, "conv2d: kernel must be [Co,Ci,Kh,Kw], got " + to_string(kernel.dims()));
  const std::size_t n = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  detail::require(kernel.dim(1) == ci, "conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                                           " input channels, input has " + std::to_string(ci));
  detail::require(bias.size() == co, "conv2d: bias length " + std::to_string(bias.size()) +
                                         " != output channels " + std::to_string(co));
  const std::size_t oh = conv_out_extent(h, kh, stride.h, pad.h);
  const std::size_t ow = conv_out_extent(w, kw, stride.w, pad.w);
  Tensor out({n, co, oh, ow});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oc = 0; oc < co; ++oc) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = bias[oc];
          for (std::size_t ic = 0; ic < ci; ++ic) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * stride.h + ky) - static_cast<std::ptrdiff_t>(pad.h);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * stride.w + kx) - static_cast<std::ptrdiff_t>(pad.w);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                acc += static_cast<double>(input.at(b, ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix))) *
                       kernel.at(oc, ic, ky, kx);
              }
            }
          }
          out.at(b, oc, y, x) = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

/// Per-channel convolution; kernel is [C,1,Kh,Kw].
inline Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Hw stride, Hw pad) {
  detail::require(input.rank() == 4, "depthwise_conv2d: input must be NCHW");
  detail::require(kernel.rank() == 4 && kernel.dim(1) == 1,
                  "depthwise_conv2d: kernel must be [C,1,Kh,Kw], got " + to_string(kernel.dims()));
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  detail::require(kernel.dim(0) == c, "depthwise_conv2d: kernel has " + std::to_string(kernel.dim(0)) +
                                          " channels, input has " + std::to_string(c));
  detail::require(bias.size() == c, "depthwise_conv2d: bias length mismatch");
  const std::size_t kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t oh = conv_out_extent(h, kh, stride.h, pad.h);
  const std::size_t ow = conv_out_extent(w, kw, stride.w, pad.w);
  Tensor out({n, c, oh, ow});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = bias[ch];
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * stride.h + ky) - static_cast<std::ptrdiff_t>(pad.h);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * stride.w + kx) - static_cast<std::ptrdiff_t>(pad.w);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              acc += static_cast<double>(input.at(b, ch, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix))) *
                     kernel.at(ch, 0, ky, kx);
            }
          }
          out.at(b, ch, y, x) = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

/// output = input · weightsᵀ + bias. Inputs of rank > 2 are flattened per sample.
inline Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  detail::require(input.rank() >= 2, "fully_connected: input needs a batch axis");
  detail::require(weights.rank() == 2, "fully_connected: weights must be [U,D]");
  const std::size_t n = input.dim(0);
  const std::size_t d = input.size() / n;
  const std::size_t u = weights.dim(0);
  detail::require(weights.dim(1) == d, "fully_connected: weights expect " + std::to_string(weights.dim(1)) +
                                           " features, input has " + std::to_string(d));
  detail::require(bias.size() == u, "fully_connected: bias length mismatch");
  Tensor out({n, u});
  for (std::size_t b = 0; b < n; ++b) {
    const float* x = input.data().data() + b * d;
    for (std::size_t j = 0; j < u; ++j) {
      const float* wr = weights.data().data() + j * d;
      double acc = bias[j];
      for (std::size_t i = 0; i < d; ++i) acc += static_cast<double>(x[i]) * wr[i];
      out[b * u + j] = static_cast<float>(acc);
    }
  }
  return out;
}

inline Tensor relu(const Tensor& t) {
  Tensor out = t;
  for (float& v : out.data()) v = std::max(v, 0.0f);
  return out;
}

/// Window reduction over NCHW. Padded cells are skipped by max pooling and count
/// as zeros for average pooling (the divisor is always the full window size).
inline Tensor pool(const Tensor& t, PoolKind kind, Hw window, Hw stride, Hw pad = {0, 0}) {
  detail::require(t.rank() == 4, "pool: input must be NCHW");
  const std::size_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  const std::size_t oh = conv_out_extent(h, window.h, stride.h, pad.h);
  const std::size_t ow = conv_out_extent(w, window.w, stride.w, pad.w);
  const double area = static_cast<double>(window.h * window.w);
  Tensor out({n, c, oh, ow});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          double sum = 0.0;
          float best = -std::numeric_limits<float>::infinity();
          for (std::size_t ky = 0; ky < window.h; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * stride.h + ky) - static_cast<std::ptrdiff_t>(pad.h);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < window.w; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * stride.w + kx) - static_cast<std::ptrdiff_t>(pad.w);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const float v = t.at(b, ch, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              sum += v;
              best = std::max(best, v);
            }
          }
          out.at(b, ch, y, x) = kind == PoolKind::max ? best : static_cast<float>(sum / area);
        }
      }
    }
  }
  return out;
}

inline Tensor add_elementwise(const Tensor& a, const Tensor& b) {
  detail::require(a.dims() == b.dims(), "add: shape mismatch " + to_string(a.dims()) + " vs " + to_string(b.dims()));
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

/// Concatenates along axis 1 (channels).
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  detail::require(a.rank() >= 2 && a.rank() == b.rank(), "concat: rank mismatch");
  detail::require(a.dim(0) == b.dim(0), "concat: batch mismatch");
  for (std::size_t i = 2; i < a.rank(); ++i) {
    detail::require(a.dim(i) == b.dim(i), "concat: spatial mismatch " + to_string(a.dims()) + " vs " + to_string(b.dims()));
  }
  Shape d = a.dims();
  d[1] = a.dim(1) + b.dim(1);
  Tensor out(d);
  const std::size_t pa = a.dim(1) * a.plane(), pb = b.dim(1) * b.plane();
  for (std::size_t n = 0; n < a.dim(0); ++n) {
    std::copy_n(a.data().data() + n * pa, pa, out.data().data() + n * (pa + pb));
    std::copy_n(b.data().data() + n * pb, pb, out.data().data() + n * (pa + pb) + pa);
  }
  return out;
}

}  // namespace chanq
