#pragma once

#include <array>
#include <vector>

#include "fer/classes.hpp"
#include "fer/rnn.hpp"

// Published probability tables used as fixtures. Class order: anger,
// disgust, fear, happy, sadness, neutral, sleep.
namespace fixtures {

// Average per-expression probabilities (ASD positive).
inline constexpr std::array<double, 7> kTable1 = {0.036045, 0.277319, 0.129893, 0.144559,
                                                  0.141052, 0.20356,  0.070315};

// Per-window probabilities at t, t+10s, t+20s, t+30s.
inline constexpr std::array<std::array<double, 7>, 4> kTable2 = {{
    {0.036045, 0.277319, 0.129893, 0.144559, 0.141052, 0.20356, 0.070315},
    {0.036154, 0.223589, 0.12785, 0.16243, 0.13984, 0.23487, 0.07984},
    {0.046045, 0.207319, 0.129893, 0.154455, 0.151052, 0.25356, 0.083145},
    {0.043152, 0.18456, 0.12389, 0.156711, 0.149986, 0.25876, 0.102457},
}};

inline constexpr std::array<double, 4> kTable2Times = {0.0, 10.0, 20.0, 30.0};

// Reported per-epoch accuracies behind the training curve figure.
inline constexpr std::array<double, 5> kEpochCurve = {0.8462, 0.8784, 0.8937, 0.937826, 0.954157};

inline fer::EmotionTimeline table2_timeline(int copies_per_window = 1) {
  std::vector<std::vector<fer::ExpressionDistribution>> windows;
  std::vector<double> times;
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<fer::ExpressionDistribution> w;
    for (int c = 0; c < copies_per_window; ++c) {
      w.push_back(fer::ExpressionDistribution::make(kTable2[k], false));
    }
    windows.push_back(std::move(w));
    times.push_back(kTable2Times[k]);
  }
  return fer::build_timeline_from_distributions(windows, times, 10.0);
}

}  // namespace fixtures
