#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fer/tensor.hpp"

namespace fer {

enum class Padding { kValid, kSame };

inline const char* padding_name(Padding p) { return p == Padding::kValid ? "valid" : "same"; }
inline Padding padding_from_name(const std::string& s) {
  if (s == "valid") return Padding::kValid;
  if (s == "same") return Padding::kSame;
  throw ParseError("unknown padding: " + s);
}

struct ConvGeometry {
  std::int64_t out_h = 0, out_w = 0;
  std::int64_t pad_top = 0, pad_left = 0;
};

inline ConvGeometry conv2d_geometry(std::int64_t h, std::int64_t w, std::int64_t kh,
                                    std::int64_t kw, std::int64_t stride, Padding padding) {
  if (stride < 1) throw DimensionError("conv2d stride must be >= 1, got " + std::to_string(stride));
  ConvGeometry g;
  if (padding == Padding::kValid) {
    g.out_h = (h - kh) / stride + 1;
    g.out_w = (w - kw) / stride + 1;
    if (h < kh || w < kw || g.out_h <= 0 || g.out_w <= 0) {
      throw DimensionError("conv2d valid output is empty for input " + std::to_string(h) + "x" +
                           std::to_string(w) + " with kernel " + std::to_string(kh) + "x" +
                           std::to_string(kw) + " stride " + std::to_string(stride));
    }
  } else {
    g.out_h = (h + stride - 1) / stride;
    g.out_w = (w + stride - 1) / stride;
    const std::int64_t pad_h = std::max<std::int64_t>(0, (g.out_h - 1) * stride + kh - h);
    const std::int64_t pad_w = std::max<std::int64_t>(0, (g.out_w - 1) * stride + kw - w);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  }
  return g;
}

/// Cross-correlation of an HxWxC input with KhxKwxCxF kernels.
inline Tensor conv2d(const Tensor& input, const Tensor& kernels, std::int64_t stride,
                     Padding padding) {
  if (input.rank() != 3) {
    throw DimensionError("conv2d input must be HxWxC, got " + input.shape_string());
  }
  if (kernels.rank() != 4) {
    throw DimensionError("conv2d kernels must be KhxKwxCxF, got " + kernels.shape_string());
  }
  const std::int64_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  const std::int64_t kh = kernels.dim(0), kw = kernels.dim(1);
  if (kernels.dim(2) != c) {
    throw DimensionError("conv2d channel mismatch: input has " + std::to_string(c) +
                         " channels, kernels expect " + std::to_string(kernels.dim(2)));
  }
  const std::int64_t f = kernels.dim(3);
  const ConvGeometry g = conv2d_geometry(h, w, kh, kw, stride, padding);

  Tensor out({g.out_h, g.out_w, f});
  const double* __restrict in = input.data();
  const double* __restrict ker = kernels.data();
  double* __restrict o = out.data();
  for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
    for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
      double* orow = o + (oy * g.out_w + ox) * f;
      for (std::int64_t ky = 0; ky < kh; ++ky) {
        const std::int64_t iy = oy * stride + ky - g.pad_top;
        if (iy < 0 || iy >= h) continue;
        for (std::int64_t kx = 0; kx < kw; ++kx) {
          const std::int64_t ix = ox * stride + kx - g.pad_left;
          if (ix < 0 || ix >= w) continue;
          const double* irow = in + (iy * w + ix) * c;
          const double* krow = ker + ((ky * kw + kx) * c) * f;
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const double v = irow[ch];
            const double* kr = krow + ch * f;
            for (std::int64_t fi = 0; fi < f; ++fi) orow[fi] += v * kr[fi];
          }
        }
      }
    }
  }
  return out;
}

/// Gradients of conv2d wrt input and kernels. upstream is out_h x out_w x F.
inline void conv2d_backward(const Tensor& input, const Tensor& kernels, std::int64_t stride,
                            Padding padding, const Tensor& upstream, Tensor* grad_input,
                            Tensor* grad_kernels) {
  const std::int64_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  const std::int64_t kh = kernels.dim(0), kw = kernels.dim(1), f = kernels.dim(3);
  const ConvGeometry g = conv2d_geometry(h, w, kh, kw, stride, padding);

  const double* __restrict in = input.data();
  const double* __restrict ker = kernels.data();
  const double* __restrict up = upstream.data();
  double* __restrict gi = grad_input ? grad_input->data() : nullptr;
  double* __restrict gk = grad_kernels ? grad_kernels->data() : nullptr;

  for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
    for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
      const double* urow = up + (oy * g.out_w + ox) * f;
      for (std::int64_t ky = 0; ky < kh; ++ky) {
        const std::int64_t iy = oy * stride + ky - g.pad_top;
        if (iy < 0 || iy >= h) continue;
        for (std::int64_t kx = 0; kx < kw; ++kx) {
          const std::int64_t ix = ox * stride + kx - g.pad_left;
          if (ix < 0 || ix >= w) continue;
          const std::int64_t ibase = (iy * w + ix) * c;
          const std::int64_t kbase = ((ky * kw + kx) * c) * f;
          for (std::int64_t ch = 0; ch < c; ++ch) {
            if (gk) {
              const double v = in[ibase + ch];
              double* gkr = gk + kbase + ch * f;
              for (std::int64_t fi = 0; fi < f; ++fi) gkr[fi] += v * urow[fi];
            }
            if (gi) {
              const double* kr = ker + kbase + ch * f;
              double acc = 0.0;
              for (std::int64_t fi = 0; fi < f; ++fi) acc += kr[fi] * urow[fi];
              gi[ibase + ch] += acc;
            }
          }
        }
      }
    }
  }
}

/// 2x2 max pooling with stride 2; even spatial extents required.
/// argmax (flat index into the input) per output cell lands in *argmax when
/// given, for backward routing.
inline Tensor max_pool2d(const Tensor& input, std::vector<std::int64_t>* argmax = nullptr) {
  if (input.rank() != 3) {
    throw DimensionError("max_pool2d input must be HxWxC, got " + input.shape_string());
  }
  const std::int64_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (h % 2 != 0) {
    throw DimensionError("max_pool2d requires an even height, got " + std::to_string(h));
  }
  if (w % 2 != 0) {
    throw DimensionError("max_pool2d requires an even width, got " + std::to_string(w));
  }
  Tensor out({h / 2, w / 2, c});
  if (argmax) argmax->assign(out.numel(), 0);
  const double* in = input.data();
  double* o = out.data();
  for (std::int64_t oy = 0; oy < h / 2; ++oy) {
    for (std::int64_t ox = 0; ox < w / 2; ++ox) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        std::int64_t best = ((2 * oy) * w + 2 * ox) * c + ch;
        double bv = in[best];
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::int64_t idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
            if (in[idx] > bv) {  // ties keep the earliest window cell
              bv = in[idx];
              best = idx;
            }
          }
        }
        const std::int64_t oidx = (oy * (w / 2) + ox) * c + ch;
        o[oidx] = bv;
        if (argmax) (*argmax)[static_cast<std::size_t>(oidx)] = best;
      }
    }
  }
  return out;
}

inline Tensor max_pool2d_backward(const std::vector<std::int64_t>& argmax,
                                  const std::vector<std::int64_t>& input_shape,
                                  const Tensor& upstream) {
  Tensor grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    grad[static_cast<std::size_t>(argmax[i])] += upstream[i];
  }
  return grad;
}

enum class BnMode { kTrain, kInfer };

/// Per-channel running statistics kept between batches.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;

  static BatchNormState fresh(std::int64_t channels) {
    BatchNormState s;
    s.running_mean = Tensor({channels}, 0.0);
    s.running_var = Tensor({channels}, 1.0);
    return s;
  }
};

inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.9;

struct BnCache {
  Tensor mean, var;  // batch statistics used in the forward pass
};

/// Channel-wise batch normalization. The last axis is the channel axis and
/// statistics are taken over all leading positions (batch and/or spatial).
/// Train mode normalizes by batch statistics and folds them into the running
/// state; infer mode reads the running state. Population variance (divide by
/// n) everywhere.
inline Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         BatchNormState& state, BnMode mode, BnCache* cache = nullptr,
                         bool update_state = true) {
  if (input.rank() < 2) {
    throw DimensionError(
        "batch_norm needs at least one batch/spatial position: input rank must be >= 2, got " +
        input.shape_string());
  }
  const std::int64_t c = input.dim(static_cast<std::size_t>(input.rank() - 1));
  if (gamma.numel() != static_cast<std::size_t>(c) || beta.numel() != static_cast<std::size_t>(c)) {
    throw DimensionError("batch_norm gamma/beta must have extent " + std::to_string(c));
  }
  const std::int64_t positions = static_cast<std::int64_t>(input.numel()) / c;

  Tensor mean({c}), var({c});
  if (mode == BnMode::kTrain) {
    const double* in = input.data();
    for (std::int64_t p = 0; p < positions; ++p) {
      for (std::int64_t ch = 0; ch < c; ++ch) mean[static_cast<std::size_t>(ch)] += in[p * c + ch];
    }
    for (std::int64_t ch = 0; ch < c; ++ch) mean[static_cast<std::size_t>(ch)] /= positions;
    for (std::int64_t p = 0; p < positions; ++p) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double d = in[p * c + ch] - mean[static_cast<std::size_t>(ch)];
        var[static_cast<std::size_t>(ch)] += d * d;
      }
    }
    for (std::int64_t ch = 0; ch < c; ++ch) var[static_cast<std::size_t>(ch)] /= positions;
    if (update_state) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        auto i = static_cast<std::size_t>(ch);
        state.running_mean[i] = kBnMomentum * state.running_mean[i] + (1.0 - kBnMomentum) * mean[i];
        state.running_var[i] = kBnMomentum * state.running_var[i] + (1.0 - kBnMomentum) * var[i];
      }
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  Tensor out(input.shape());
  const double* in = input.data();
  double* o = out.data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    auto i = static_cast<std::size_t>(ch);
    const double inv = 1.0 / std::sqrt(var[i] + kBnEpsilon);
    const double g = gamma[i], b = beta[i], m = mean[i];
    for (std::int64_t p = 0; p < positions; ++p) {
      o[p * c + ch] = (in[p * c + ch] - m) * inv * g + b;
    }
  }
  if (cache) {
    cache->mean = std::move(mean);
    cache->var = std::move(var);
  }
  return out;
}

/// Read-only normalization against frozen running statistics.
inline Tensor batch_norm_infer(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                               const BatchNormState& state) {
  BatchNormState tmp = state;
  return batch_norm(input, gamma, beta, tmp, BnMode::kInfer);
}

/// Gradients for train-mode batch_norm (through the batch statistics).
inline void batch_norm_backward(const Tensor& input, const Tensor& gamma, const BnCache& cache,
                                const Tensor& upstream, Tensor* grad_input, Tensor* grad_gamma,
                                Tensor* grad_beta) {
  const std::int64_t c = input.dim(static_cast<std::size_t>(input.rank() - 1));
  const std::int64_t positions = static_cast<std::int64_t>(input.numel()) / c;
  const double* in = input.data();
  const double* up = upstream.data();

  for (std::int64_t ch = 0; ch < c; ++ch) {
    auto i = static_cast<std::size_t>(ch);
    const double m = cache.mean[i];
    const double inv = 1.0 / std::sqrt(cache.var[i] + kBnEpsilon);
    double sum_u = 0.0, sum_ux = 0.0;
    for (std::int64_t p = 0; p < positions; ++p) {
      const double xhat = (in[p * c + ch] - m) * inv;
      sum_u += up[p * c + ch];
      sum_ux += up[p * c + ch] * xhat;
    }
    if (grad_gamma) (*grad_gamma)[i] += sum_ux;
    if (grad_beta) (*grad_beta)[i] += sum_u;
    if (grad_input) {
      const double g = gamma[i];
      const double mean_u = sum_u / positions;
      const double mean_ux = sum_ux / positions;
      double* gi = grad_input->data();
      for (std::int64_t p = 0; p < positions; ++p) {
        const double xhat = (in[p * c + ch] - m) * inv;
        gi[p * c + ch] += g * inv * (up[p * c + ch] - mean_u - xhat * mean_ux);
      }
    }
  }
}

/// Fully connected map: out = input . weights + bias.
inline Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 1 || weights.rank() != 2 || bias.rank() != 1) {
    throw DimensionError("dense expects vector . matrix + vector, got " + input.shape_string() +
                         " . " + weights.shape_string() + " + " + bias.shape_string());
  }
  const std::int64_t n = input.dim(0), m = weights.dim(1);
  if (weights.dim(0) != n || bias.dim(0) != m) {
    throw DimensionError("dense extent mismatch: input " + input.shape_string() + ", weights " +
                         weights.shape_string() + ", bias " + bias.shape_string());
  }
  Tensor out({m});
  const double* x = input.data();
  const double* w = weights.data();
  double* o = out.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const double v = x[i];
    const double* wrow = w + i * m;
    for (std::int64_t j = 0; j < m; ++j) o[j] += v * wrow[j];
  }
  for (std::int64_t j = 0; j < m; ++j) o[j] += bias[static_cast<std::size_t>(j)];
  return out;
}

inline void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream,
                           Tensor* grad_input, Tensor* grad_weights, Tensor* grad_bias) {
  const std::int64_t n = input.dim(0), m = weights.dim(1);
  const double* x = input.data();
  const double* w = weights.data();
  const double* up = upstream.data();
  if (grad_bias) {
    double* gb = grad_bias->data();
    for (std::int64_t j = 0; j < m; ++j) gb[j] += up[j];
  }
  for (std::int64_t i = 0; i < n; ++i) {
    if (grad_weights) {
      const double v = x[i];
      double* gw = grad_weights->data() + i * m;
      for (std::int64_t j = 0; j < m; ++j) gw[j] += v * up[j];
    }
    if (grad_input) {
      const double* wrow = w + i * m;
      double acc = 0.0;
      for (std::int64_t j = 0; j < m; ++j) acc += wrow[j] * up[j];
      grad_input->data()[i] += acc;
    }
  }
}

}  // namespace fer
