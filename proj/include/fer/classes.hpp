#pragma once

#include <array>
#include <cmath>
#include <string>

#include "fer/common.hpp"
#include "fer/tensor.hpp"

namespace fer {

inline constexpr int kNumClasses = 7;

/// The frozen 7-way label order; every serialization uses these indices.
enum class ExpressionClass : int {
  kAnger = 0,
  kDisgust = 1,
  kFear = 2,
  kHappy = 3,
  kSadness = 4,
  kNeutral = 5,
  kSleep = 6,
};

inline constexpr std::array<const char*, kNumClasses> kClassNames = {
    "anger", "disgust", "fear", "happy", "sadness", "neutral", "sleep"};

inline const char* class_name(ExpressionClass c) {
  return kClassNames[static_cast<std::size_t>(c)];
}

inline ExpressionClass class_from_name(const std::string& s) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (s == kClassNames[static_cast<std::size_t>(i)]) return static_cast<ExpressionClass>(i);
  }
  std::string all;
  for (int i = 0; i < kNumClasses; ++i) {
    all += kClassNames[static_cast<std::size_t>(i)];
    if (i + 1 < kNumClasses) all += ", ";
  }
  throw ParseError("unknown expression label \"" + s + "\" (valid labels: " + all + ")");
}

/// Scores over the 7 classes. `normalized` distributions are proper
/// probability vectors; unnormalized ones (the literal Eq-6 head, published
/// fixture tables) only promise finite scores in [0, 1.1].
struct ExpressionDistribution {
  std::array<double, kNumClasses> scores{};
  bool normalized = false;

  static ExpressionDistribution make(const std::array<double, kNumClasses>& s, bool normalized) {
    double sum = 0.0;
    for (double v : s) {
      if (!std::isfinite(v)) throw Error("non-finite expression score");
      if (v < 0.0 || v > 1.1) {
        throw Error("expression score " + std::to_string(v) + " outside [0, 1.1]");
      }
      sum += v;
    }
    if (normalized) {
      if (std::abs(sum - 1.0) > 1e-6) {
        throw Error("normalized distribution must sum to 1 within 1e-6, got " +
                    std::to_string(sum));
      }
      for (double v : s) {
        if (v > 1.0) throw Error("normalized score above 1");
      }
    }
    return ExpressionDistribution{s, normalized};
  }

  static ExpressionDistribution from_tensor(const Tensor& t, bool normalized) {
    if (t.numel() != kNumClasses) {
      throw DimensionError("expression distribution needs 7 scores, got " + t.shape_string());
    }
    std::array<double, kNumClasses> s{};
    for (int i = 0; i < kNumClasses; ++i) s[static_cast<std::size_t>(i)] = t[static_cast<std::size_t>(i)];
    return make(s, normalized);
  }

  Tensor to_tensor() const {
    return Tensor({kNumClasses}, std::vector<double>(scores.begin(), scores.end()));
  }

  double operator[](ExpressionClass c) const { return scores[static_cast<std::size_t>(c)]; }
};

/// Argmax with the documented lowest-index tie break.
inline ExpressionClass dominant(const ExpressionDistribution& d) {
  int best = 0;
  for (int i = 1; i < kNumClasses; ++i) {
    if (d.scores[static_cast<std::size_t>(i)] > d.scores[static_cast<std::size_t>(best)]) best = i;
  }
  return static_cast<ExpressionClass>(best);
}

/// Descending score order (ties by lower class index); rank 0 is the
/// dominant class.
inline std::array<ExpressionClass, kNumClasses> ranking(const ExpressionDistribution& d) {
  std::array<ExpressionClass, kNumClasses> order{};
  std::array<bool, kNumClasses> used{};
  for (int r = 0; r < kNumClasses; ++r) {
    int best = -1;
    for (int i = 0; i < kNumClasses; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      if (best < 0 ||
          d.scores[static_cast<std::size_t>(i)] > d.scores[static_cast<std::size_t>(best)]) {
        best = i;
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    order[static_cast<std::size_t>(r)] = static_cast<ExpressionClass>(best);
  }
  return order;
}

}  // namespace fer
