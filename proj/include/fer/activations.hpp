#pragma once

#include <algorithm>
#include <cmath>

#include "fer/tensor.hpp"

namespace fer {

/// The activation inventory. The *_EQ* variants reproduce the source
/// formulas literally, zero branches included; the *_STANDARD variants are
/// the common forms used when a layer has to stay trainable / normalized.
enum class ActivationKind {
  SIGMOID_EQ1,          // 1/(1+e^-x) for x > 0, exactly 0 for x <= 0
  SIGMOID_STANDARD,     // classic logistic
  SOFTMAX_EQ6_LITERAL,  // softmax value where x > 0, exactly 0 elsewhere, no renorm
  SOFTMAX_STANDARD,     // max-subtracted softmax, sums to 1
  HARD_CLAMP_EQ8,       // clamp to [-1, 1]
  IDENTITY,
};

inline const char* activation_name(ActivationKind k) {
  switch (k) {
    case ActivationKind::SIGMOID_EQ1: return "sigmoid_eq1";
    case ActivationKind::SIGMOID_STANDARD: return "sigmoid_standard";
    case ActivationKind::SOFTMAX_EQ6_LITERAL: return "softmax_eq6_literal";
    case ActivationKind::SOFTMAX_STANDARD: return "softmax_standard";
    case ActivationKind::HARD_CLAMP_EQ8: return "hard_clamp_eq8";
    case ActivationKind::IDENTITY: return "identity";
  }
  return "?";
}

inline ActivationKind activation_from_name(const std::string& s) {
  for (ActivationKind k :
       {ActivationKind::SIGMOID_EQ1, ActivationKind::SIGMOID_STANDARD,
        ActivationKind::SOFTMAX_EQ6_LITERAL, ActivationKind::SOFTMAX_STANDARD,
        ActivationKind::HARD_CLAMP_EQ8, ActivationKind::IDENTITY}) {
    if (s == activation_name(k)) return k;
  }
  throw ParseError("unknown activation kind: " + s);
}

inline bool is_softmax(ActivationKind k) {
  return k == ActivationKind::SOFTMAX_EQ6_LITERAL || k == ActivationKind::SOFTMAX_STANDARD;
}

namespace detail {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Max-subtracted softmax into out; input and out may alias.
inline void softmax_standard_inplace(const double* x, double* out, std::size_t n) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
}

}  // namespace detail

/// Elementwise / vector activation. Softmax kinds require a rank-1 input.
inline Tensor activate(ActivationKind kind, const Tensor& input) {
  if (is_softmax(kind)) {
    if (input.rank() != 1) {
      throw DimensionError(std::string(activation_name(kind)) + " requires a rank-1 input, got " +
                           input.shape_string());
    }
    if (input.numel() == 0) {
      throw DimensionError("softmax on empty vector");
    }
  }
  Tensor out(input.shape());
  const std::size_t n = input.numel();
  switch (kind) {
    case ActivationKind::SIGMOID_EQ1:
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = input[i] > 0.0 ? detail::logistic(input[i]) : 0.0;
      }
      break;
    case ActivationKind::SIGMOID_STANDARD:
      for (std::size_t i = 0; i < n; ++i) out[i] = detail::logistic(input[i]);
      break;
    case ActivationKind::SOFTMAX_STANDARD:
      detail::softmax_standard_inplace(input.data(), out.data(), n);
      break;
    case ActivationKind::SOFTMAX_EQ6_LITERAL:
      detail::softmax_standard_inplace(input.data(), out.data(), n);
      for (std::size_t i = 0; i < n; ++i) {
        if (!(input[i] > 0.0)) out[i] = 0.0;
      }
      break;
    case ActivationKind::HARD_CLAMP_EQ8:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::clamp(input[i], -1.0, 1.0);
      break;
    case ActivationKind::IDENTITY:
      out = input;
      break;
  }
  return out;
}

/// Chain-rule pullback for activate(): upstream has the output's shape.
/// Subgradient conventions: SIGMOID_EQ1 is 0 on x <= 0, HARD_CLAMP_EQ8 is 0
/// outside the open interval (-1, 1).
inline Tensor activate_backward(ActivationKind kind, const Tensor& input, const Tensor& output,
                                const Tensor& upstream) {
  Tensor grad(input.shape());
  const std::size_t n = input.numel();
  switch (kind) {
    case ActivationKind::SIGMOID_EQ1:
      for (std::size_t i = 0; i < n; ++i) {
        grad[i] = input[i] > 0.0 ? upstream[i] * output[i] * (1.0 - output[i]) : 0.0;
      }
      break;
    case ActivationKind::SIGMOID_STANDARD:
      for (std::size_t i = 0; i < n; ++i) {
        grad[i] = upstream[i] * output[i] * (1.0 - output[i]);
      }
      break;
    case ActivationKind::SOFTMAX_STANDARD: {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += upstream[i] * output[i];
      for (std::size_t i = 0; i < n; ++i) grad[i] = output[i] * (upstream[i] - dot);
      break;
    }
    case ActivationKind::SOFTMAX_EQ6_LITERAL: {
      // y_i = m_i * s_i with s the full softmax and m_i = [x_i > 0];
      // dx_i = u_i*y_i - s_i * sum_k u_k*y_k.
      Tensor s(input.shape());
      detail::softmax_standard_inplace(input.data(), s.data(), n);
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += upstream[i] * output[i];
      for (std::size_t i = 0; i < n; ++i) {
        grad[i] = upstream[i] * output[i] - s[i] * acc;
      }
      break;
    }
    case ActivationKind::HARD_CLAMP_EQ8:
      for (std::size_t i = 0; i < n; ++i) {
        grad[i] = (input[i] > -1.0 && input[i] < 1.0) ? upstream[i] : 0.0;
      }
      break;
    case ActivationKind::IDENTITY:
      grad = upstream;
      break;
  }
  return grad;
}

}  // namespace fer
