#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fer/classes.hpp"
#include "fer/cnn.hpp"
#include "fer/rng.hpp"
#include "fer/tape.hpp"

namespace fer {

/// Elman-style recurrent cell over expression distributions:
///   S_t = g_f(x_t.U + S_{t-1}.W + b_f),  O_t = g_o(S_t.V + b_o).
/// The bias-free special case recovers the plain state/output equations.
struct RnnCell {
  Tensor u;    // 7 x h (input weights)
  Tensor w;    // h x h (recurrent weights)
  Tensor v;    // h x 7 (output weights)
  Tensor b_f;  // h
  Tensor b_o;  // 7
  std::int64_t hidden = 16;
  ActivationKind hidden_activation = ActivationKind::HARD_CLAMP_EQ8;
  ActivationKind output_activation = ActivationKind::SOFTMAX_STANDARD;

  void validate() const {
    if (u.shape() != std::vector<std::int64_t>{kNumClasses, hidden} ||
        w.shape() != std::vector<std::int64_t>{hidden, hidden} ||
        v.shape() != std::vector<std::int64_t>{hidden, kNumClasses} ||
        b_f.shape() != std::vector<std::int64_t>{hidden} ||
        b_o.shape() != std::vector<std::int64_t>{kNumClasses}) {
      throw DimensionError("rnn cell parameter shapes are inconsistent with hidden size " +
                           std::to_string(hidden));
    }
  }
};

inline RnnCell build_cell(std::int64_t hidden, std::uint64_t seed,
                          ActivationKind hidden_activation = ActivationKind::HARD_CLAMP_EQ8,
                          ActivationKind output_activation = ActivationKind::SOFTMAX_STANDARD) {
  if (hidden < 1) throw Error("hidden size must be >= 1");
  RnnCell c;
  c.hidden = hidden;
  c.hidden_activation = hidden_activation;
  c.output_activation = output_activation;
  Rng rng(seed);
  c.u = detail::glorot_uniform(rng, {kNumClasses, hidden}, kNumClasses,
                               static_cast<double>(hidden));
  c.w = detail::glorot_uniform(rng, {hidden, hidden}, static_cast<double>(hidden),
                               static_cast<double>(hidden));
  c.v = detail::glorot_uniform(rng, {hidden, kNumClasses}, static_cast<double>(hidden),
                               kNumClasses);
  c.b_f = Tensor({hidden}, 0.0);
  c.b_o = Tensor({kNumClasses}, 0.0);
  return c;
}

inline RnnCell zero_cell(std::int64_t hidden) {
  RnnCell c = build_cell(hidden, 0);
  for (Tensor* t : {&c.u, &c.w, &c.v, &c.b_f, &c.b_o}) t->fill(0.0);
  return c;
}

/// Hidden state; components stay inside the clamp range [-1, 1]. S_0 is the
/// zero vector.
struct RnnState {
  Tensor s;
  int t = 0;

  static RnnState initial(std::int64_t hidden) { return RnnState{Tensor({hidden}, 0.0), 0}; }

  void validate() const {
    for (std::size_t i = 0; i < s.numel(); ++i) {
      if (!(s[i] >= -1.0 && s[i] <= 1.0)) {
        throw Error("rnn state component outside [-1, 1]: " + std::to_string(s[i]));
      }
    }
  }
};

struct RnnStepResult {
  RnnState state;
  ExpressionDistribution output;
};

inline RnnStepResult rnn_step(const RnnCell& cell, const ExpressionDistribution& x,
                              const RnnState& prev) {
  cell.validate();
  if (prev.s.numel() != static_cast<std::size_t>(cell.hidden)) {
    throw DimensionError("rnn state has " + std::to_string(prev.s.numel()) +
                         " components, cell expects " + std::to_string(cell.hidden));
  }
  Tensor pre = dense(x.to_tensor(), cell.u, cell.b_f);
  Tensor rec = dense(prev.s, cell.w, Tensor({cell.hidden}, 0.0));
  for (std::size_t i = 0; i < pre.numel(); ++i) pre[i] += rec[i];
  RnnStepResult r;
  r.state.s = activate(cell.hidden_activation, pre);
  r.state.t = prev.t + 1;
  r.state.validate();
  Tensor logits = dense(r.state.s, cell.v, cell.b_o);
  r.output = ExpressionDistribution::from_tensor(
      activate(cell.output_activation, logits),
      cell.output_activation == ActivationKind::SOFTMAX_STANDARD);
  return r;
}

/// Next-state map x_{t+1} = clamp(f(x_t) + g(x_t)) with two affine 7->7 maps.
struct NextStatePredictor {
  Tensor w_f, c_f;  // 7x7, 7
  Tensor w_g, c_g;  // 7x7, 7

  static NextStatePredictor zero() {
    NextStatePredictor p;
    p.w_f = Tensor({kNumClasses, kNumClasses}, 0.0);
    p.c_f = Tensor({kNumClasses}, 0.0);
    p.w_g = Tensor({kNumClasses, kNumClasses}, 0.0);
    p.c_g = Tensor({kNumClasses}, 0.0);
    return p;
  }

  static NextStatePredictor seeded(std::uint64_t seed) {
    Rng rng(seed);
    NextStatePredictor p;
    p.w_f = detail::glorot_uniform(rng, {kNumClasses, kNumClasses}, kNumClasses, kNumClasses);
    p.c_f = Tensor({kNumClasses}, 0.0);
    p.w_g = detail::glorot_uniform(rng, {kNumClasses, kNumClasses}, kNumClasses, kNumClasses);
    p.c_g = Tensor({kNumClasses}, 0.0);
    return p;
  }
};

/// Saturating one-step prediction; every output component lands in [-1, 1].
inline Tensor predict_next(const NextStatePredictor& pred, const ExpressionDistribution& x) {
  Tensor xt = x.to_tensor();
  Tensor f = dense(xt, pred.w_f, pred.c_f);
  Tensor g = dense(xt, pred.w_g, pred.c_g);
  for (std::size_t i = 0; i < f.numel(); ++i) f[i] += g[i];
  return activate(ActivationKind::HARD_CLAMP_EQ8, f);
}

/// Ordered (timestamp, distribution) windows plus the cell's prediction for
/// the window after the last one.
struct TimelineEntry {
  double timestamp = 0.0;
  ExpressionDistribution dist;
};

struct EmotionTimeline {
  std::vector<TimelineEntry> entries;
  double spacing = 10.0;
  std::optional<ExpressionDistribution> predicted_next;

  void validate() const {
    for (std::size_t i = 1; i < entries.size(); ++i) {
      if (!(entries[i].timestamp > entries[i - 1].timestamp)) {
        throw Error("timeline timestamps must be strictly increasing");
      }
    }
  }
};

struct ShiftReport {
  std::vector<ExpressionClass> dominants;  // one per timeline entry
  struct Transition {
    ExpressionClass from;
    ExpressionClass to;
    double at;  // timestamp of the entry where the new dominant appears
  };
  std::vector<Transition> transitions;
  std::array<double, kNumClasses> deltas{};  // last window score - first window score
};

/// Window aggregation core: each window contributes the arithmetic mean of
/// its distributions. When a cell is given, it is unrolled over the window
/// means (S_0 = 0) and its final output becomes predicted_next.
inline EmotionTimeline build_timeline_from_distributions(
    const std::vector<std::vector<ExpressionDistribution>>& windows,
    const std::vector<double>& timestamps, double spacing = 10.0,
    const RnnCell* cell = nullptr) {
  if (windows.size() != timestamps.size()) {
    throw DimensionError("window and timestamp counts differ");
  }
  EmotionTimeline tl;
  tl.spacing = spacing;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    if (windows[k].empty()) {
      char label[64];
      if (k > 0) {
        std::snprintf(label, sizeof(label), "t+%gs", static_cast<double>(k) * spacing);
      } else {
        std::snprintf(label, sizeof(label), "t");
      }
      throw Error(std::string("empty timeline window ") + label + " at timestamp " +
                  std::to_string(timestamps[k]));
    }
    std::array<double, kNumClasses> mean{};
    bool normalized = true;
    bool all_equal = true;
    for (const ExpressionDistribution& d : windows[k]) {
      normalized = normalized && d.normalized;
      all_equal = all_equal && d.scores == windows[k].front().scores;
      for (int c = 0; c < kNumClasses; ++c) {
        mean[static_cast<std::size_t>(c)] += d.scores[static_cast<std::size_t>(c)];
      }
    }
    if (all_equal) {
      // mean of identical distributions is that distribution, bit for bit
      mean = windows[k].front().scores;
    } else {
      for (int c = 0; c < kNumClasses; ++c) {
        mean[static_cast<std::size_t>(c)] /= static_cast<double>(windows[k].size());
      }
    }
    tl.entries.push_back({timestamps[k], ExpressionDistribution::make(mean, normalized)});
  }
  tl.validate();
  if (cell) {
    RnnState state = RnnState::initial(cell->hidden);
    ExpressionDistribution out;
    for (const TimelineEntry& e : tl.entries) {
      RnnStepResult r = rnn_step(*cell, e.dist, state);
      state = r.state;
      out = r.output;
    }
    tl.predicted_next = out;
  }
  return tl;
}

/// Model-driven timeline: each window holds prepared model inputs; the entry
/// is the mean of the per-frame forward distributions.
inline EmotionTimeline build_timeline(const CnnModel& model, const RnnCell* cell,
                                      const std::vector<std::vector<LabeledImage>>& frame_windows,
                                      const std::vector<double>& timestamps,
                                      double spacing = 10.0) {
  std::vector<std::vector<ExpressionDistribution>> dists(frame_windows.size());
  for (std::size_t k = 0; k < frame_windows.size(); ++k) {
    for (const LabeledImage& input : frame_windows[k]) {
      dists[k].push_back(forward(model, input.image, input.aux));
    }
  }
  return build_timeline_from_distributions(dists, timestamps, spacing, cell);
}

/// Dominant expression per window, the transitions between them, and the
/// first-to-last score delta per class.
inline ShiftReport detect_shift(const EmotionTimeline& timeline) {
  if (timeline.entries.size() < 2) {
    throw Error("shift detection needs at least 2 timeline entries, got " +
                std::to_string(timeline.entries.size()));
  }
  ShiftReport report;
  for (const TimelineEntry& e : timeline.entries) report.dominants.push_back(dominant(e.dist));
  for (std::size_t i = 1; i < timeline.entries.size(); ++i) {
    if (report.dominants[i] != report.dominants[i - 1]) {
      report.transitions.push_back(
          {report.dominants[i - 1], report.dominants[i], timeline.entries[i].timestamp});
    }
  }
  const auto& first = timeline.entries.front().dist.scores;
  const auto& last = timeline.entries.back().dist.scores;
  for (int c = 0; c < kNumClasses; ++c) {
    report.deltas[static_cast<std::size_t>(c)] =
        last[static_cast<std::size_t>(c)] - first[static_cast<std::size_t>(c)];
  }
  return report;
}

/// Worst-case rank of an incoming dominant class in the previous window's
/// ordering (1 = it was second-highest); 0 when the dominant never changes.
inline int smoothness(const EmotionTimeline& timeline) {
  if (timeline.entries.size() < 2) {
    throw Error("smoothness needs at least 2 timeline entries, got " +
                std::to_string(timeline.entries.size()));
  }
  int worst = 0;
  for (std::size_t i = 1; i < timeline.entries.size(); ++i) {
    const ExpressionClass prev_dom = dominant(timeline.entries[i - 1].dist);
    const ExpressionClass cur_dom = dominant(timeline.entries[i].dist);
    if (cur_dom == prev_dom) continue;
    const auto order = ranking(timeline.entries[i - 1].dist);
    for (int r = 0; r < kNumClasses; ++r) {
      if (order[static_cast<std::size_t>(r)] == cur_dom) {
        worst = std::max(worst, r);
        break;
      }
    }
  }
  return worst;
}

/// One training sequence: inputs x_0..x_{T-1} with the class to predict at
/// each step (the dominant of the next element when derived from a series).
struct RnnSequence {
  std::vector<ExpressionDistribution> inputs;
  std::vector<ExpressionClass> targets;
};

/// next-step supervision from a raw series: predict argmax(x_{t+1}) from x_t.
inline RnnSequence make_next_step_sequence(const std::vector<ExpressionDistribution>& series) {
  if (series.size() < 2) {
    throw Error("a training sequence needs length >= 2, got " + std::to_string(series.size()));
  }
  RnnSequence seq;
  for (std::size_t i = 0; i + 1 < series.size(); ++i) {
    seq.inputs.push_back(series[i]);
    seq.targets.push_back(dominant(series[i + 1]));
  }
  return seq;
}

/// Truncated BPTT over whole sequences (desk scale) with cross-entropy on
/// the softmax output; deterministic for a fixed seed.
inline void train_rnn_sequences(RnnCell& cell, const std::vector<RnnSequence>& sequences,
                                const TrainConfig& config) {
  config.validate();
  cell.validate();
  if (sequences.empty()) throw Error("cannot train on an empty sequence set");
  if (cell.output_activation != ActivationKind::SOFTMAX_STANDARD) {
    throw Error("training requires the softmax_standard output (cross-entropy)");
  }
  for (const RnnSequence& s : sequences) {
    if (s.inputs.empty() || s.inputs.size() != s.targets.size()) {
      throw Error("every sequence needs matching non-empty inputs and targets");
    }
  }

  Tensor* params[] = {&cell.u, &cell.w, &cell.v, &cell.b_f, &cell.b_o};
  std::vector<Tensor> velocity;
  if (config.optimizer == TrainConfig::Optimizer::kSgdMomentum09) {
    for (Tensor* p : params) velocity.emplace_back(p->shape());
  }

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t si = 0; si < sequences.size(); ++si) {
      const RnnSequence& seq = sequences[si];
      GradTape t;
      const int u = t.leaf_ref(&cell.u), w = t.leaf_ref(&cell.w), v = t.leaf_ref(&cell.v);
      const int b_f = t.leaf_ref(&cell.b_f), b_o = t.leaf_ref(&cell.b_o);
      int state = t.leaf(Tensor({cell.hidden}, 0.0));
      int total = -1;
      for (std::size_t step = 0; step < seq.inputs.size(); ++step) {
        int x = t.leaf(seq.inputs[step].to_tensor());
        int pre = tape::add(t, tape::dense(t, x, u, b_f), tape::matvec(t, state, w));
        state = tape::activation(t, cell.hidden_activation, pre);
        int logits = tape::dense(t, state, v, b_o);
        int loss = tape::softmax_xent(t, logits, static_cast<int>(seq.targets[step]));
        total = total < 0 ? loss : tape::add(t, total, loss);
      }
      int mean = tape::scale(t, total, 1.0 / static_cast<double>(seq.inputs.size()));
      if (!std::isfinite(t.value(mean)[0])) {
        throw Error("non-finite loss at epoch " + std::to_string(epoch + 1) + ", sequence " +
                    std::to_string(si + 1));
      }
      t.backward(mean);
      const int ids[] = {u, w, v, b_f, b_o};
      for (std::size_t p = 0; p < 5; ++p) {
        const Tensor& g = t.grad(ids[p]);
        Tensor& wt = *params[p];
        if (config.optimizer == TrainConfig::Optimizer::kSgdMomentum09) {
          Tensor& vel = velocity[p];
          for (std::size_t i = 0; i < wt.numel(); ++i) {
            vel[i] = 0.9 * vel[i] + g[i];
            wt[i] -= config.learning_rate * vel[i];
          }
        } else {
          for (std::size_t i = 0; i < wt.numel(); ++i) wt[i] -= config.learning_rate * g[i];
        }
      }
    }
  }
}

/// Convenience wrapper: derive next-step supervision from raw series first.
inline void train_rnn(RnnCell& cell,
                      const std::vector<std::vector<ExpressionDistribution>>& series,
                      const TrainConfig& config) {
  if (series.empty()) throw Error("cannot train on an empty sequence set");
  std::vector<RnnSequence> sequences;
  sequences.reserve(series.size());
  for (const auto& s : series) sequences.push_back(make_next_step_sequence(s));
  train_rnn_sequences(cell, sequences, config);
}

/// Fraction of steps whose predicted next class matches the target, states
/// carried through each sequence.
inline double rnn_next_step_accuracy(const RnnCell& cell,
                                     const std::vector<std::vector<ExpressionDistribution>>& series) {
  std::size_t correct = 0, total = 0;
  for (const auto& s : series) {
    const RnnSequence seq = make_next_step_sequence(s);
    RnnState state = RnnState::initial(cell.hidden);
    for (std::size_t i = 0; i < seq.inputs.size(); ++i) {
      RnnStepResult r = rnn_step(cell, seq.inputs[i], state);
      state = r.state;
      if (dominant(r.output) == seq.targets[i]) ++correct;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace fer
