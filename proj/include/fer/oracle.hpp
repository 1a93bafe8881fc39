#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "fer/layers.hpp"
#include "fer/tensor.hpp"

// Reference implementations kept deliberately naive and independent of the
// production kernels in layers.hpp. They are the comparison side of the
// self-test and oracle suites, never a fast path.
namespace fer::oracle {

inline Tensor conv2d_naive(const Tensor& input, const Tensor& kernels, std::int64_t stride,
                           Padding padding) {
  const std::int64_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  const std::int64_t kh = kernels.dim(0), kw = kernels.dim(1), f = kernels.dim(3);
  const ConvGeometry g = conv2d_geometry(h, w, kh, kw, stride, padding);
  Tensor out({g.out_h, g.out_w, f});
  for (std::int64_t oy = 0; oy < g.out_h; ++oy)
    for (std::int64_t ox = 0; ox < g.out_w; ++ox)
      for (std::int64_t fi = 0; fi < f; ++fi) {
        double acc = 0.0;
        for (std::int64_t ky = 0; ky < kh; ++ky)
          for (std::int64_t kx = 0; kx < kw; ++kx)
            for (std::int64_t ch = 0; ch < c; ++ch) {
              const std::int64_t iy = oy * stride + ky - g.pad_top;
              const std::int64_t ix = ox * stride + kx - g.pad_left;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += input[static_cast<std::size_t>((iy * w + ix) * c + ch)] *
                     kernels[static_cast<std::size_t>(((ky * kw + kx) * c + ch) * f + fi)];
            }
        out[static_cast<std::size_t>((oy * g.out_w + ox) * f + fi)] = acc;
      }
  return out;
}

inline Tensor max_pool2d_naive(const Tensor& input) {
  const std::int64_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  Tensor out({h / 2, w / 2, c});
  for (std::int64_t oy = 0; oy < h / 2; ++oy)
    for (std::int64_t ox = 0; ox < w / 2; ++ox)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::int64_t iy = 2 * oy; iy < 2 * oy + 2; ++iy)
          for (std::int64_t ix = 2 * ox; ix < 2 * ox + 2; ++ix)
            best = std::max(best, input[static_cast<std::size_t>((iy * w + ix) * c + ch)]);
        out[static_cast<std::size_t>((oy * (w / 2) + ox) * c + ch)] = best;
      }
  return out;
}

/// Two-pass per-channel mean/variance normalization, train semantics.
inline Tensor batch_norm_naive(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                               double eps = kBnEpsilon) {
  const std::int64_t c = input.dim(static_cast<std::size_t>(input.rank() - 1));
  const std::int64_t positions = static_cast<std::int64_t>(input.numel()) / c;
  Tensor out(input.shape());
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (std::int64_t p = 0; p < positions; ++p)
      mean += input[static_cast<std::size_t>(p * c + ch)];
    mean /= positions;
    double var = 0.0;
    for (std::int64_t p = 0; p < positions; ++p) {
      const double d = input[static_cast<std::size_t>(p * c + ch)] - mean;
      var += d * d;
    }
    var /= positions;
    for (std::int64_t p = 0; p < positions; ++p) {
      const auto i = static_cast<std::size_t>(p * c + ch);
      out[i] = (input[i] - mean) / std::sqrt(var + eps) * gamma[static_cast<std::size_t>(ch)] +
               beta[static_cast<std::size_t>(ch)];
    }
  }
  return out;
}

/// Explicit summation dot product.
inline Tensor dense_naive(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const std::int64_t n = input.dim(0), m = weights.dim(1);
  Tensor out({m});
  for (std::int64_t j = 0; j < m; ++j) {
    double acc = bias[static_cast<std::size_t>(j)];
    for (std::int64_t i = 0; i < n; ++i) {
      acc += input[static_cast<std::size_t>(i)] * weights[static_cast<std::size_t>(i * m + j)];
    }
    out[static_cast<std::size_t>(j)] = acc;
  }
  return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

/// Central finite differences of a scalar function at x, step h.
inline Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                double h = 1e-5) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + h;
    const double fp = f(probe);
    probe[i] = keep - h;
    const double fm = f(probe);
    probe[i] = keep;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

/// Relative error with an absolute floor so that near-zero gradients compare
/// on FD noise terms rather than blowing up.
inline double gradient_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

inline double max_gradient_rel_error(const Tensor& analytic, const Tensor& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.numel(); ++i) {
    worst = std::max(worst, gradient_rel_error(analytic[i], numeric[i]));
  }
  return worst;
}

}  // namespace fer::oracle
