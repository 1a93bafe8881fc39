#pragma once

#include <string>
#include <vector>

#include "fer/cnn.hpp"
#include "fer/oracle.hpp"
#include "fer/rnn.hpp"
#include "fer/selfcheck.hpp"

// Finite-difference verification of the assembled networks, central
// differences at h = 1e-5 against the tape gradients.
namespace fer::gradcheck {

struct Result {
  std::string name;
  double max_rel_error = 0.0;
  bool pass = false;
};

inline constexpr double kTolerance = 1e-4;
inline constexpr double kStep = 1e-5;

/// FD check of the full CNN training loss on one random sample. Probes
/// `samples_per_tensor` random coordinates of every parameter tensor.
inline Result check_cnn(const CnnConfig& config, int samples_per_tensor = 12,
                        std::uint64_t seed = 2024) {
  CnnModel model = build_model(config);
  Rng rng(seed);
  LabeledImage sample;
  sample.image = selfcheck::random_tensor(rng, {config.input_size, config.input_size, 1}, 0.0, 1.0);
  if (config.aux_landmarks) {
    sample.aux = profile_features(normalize_face(canonical_face_template())).flattened();
  }
  sample.label = ExpressionClass::kHappy;

  GradTape t;
  detail::CnnLeaves L = detail::put_leaves(t, model);
  const int loss_node = detail::record_train_loss(t, L, model, sample);
  t.backward(loss_node);

  // Two routes to the same loss: the tape forward and the pure probe.
  const detail::LossProbe base = detail::train_loss_probe(model, sample);
  if (std::abs(base.loss - t.value(loss_node)[0]) > 1e-12) {
    return {"cnn finite-difference check: tape and pure forward disagree",
            std::abs(base.loss - t.value(loss_node)[0]), false};
  }

  Tensor* params[] = {&model.conv1, &model.bn1_gamma, &model.bn1_beta, &model.conv2,
                      &model.bn2_gamma, &model.bn2_beta, &model.fc_w,  &model.fc_b,
                      &model.head_w, &model.head_b};
  const int leaf_ids[] = {L.conv1, L.bn1_gamma, L.bn1_beta, L.conv2, L.bn2_gamma,
                          L.bn2_beta, L.fc_w,   L.fc_b,     L.head_w, L.head_b};
  double worst = 0.0;
  for (std::size_t p = 0; p < 10; ++p) {
    Tensor& w = *params[p];
    const Tensor& analytic = t.grad(leaf_ids[p]);
    int taken = 0, attempts = 0;
    while (taken < samples_per_tensor && attempts < 20 * samples_per_tensor) {
      ++attempts;
      const auto i = static_cast<std::size_t>(rng.below(w.numel()));
      const double keep = w[i];
      w[i] = keep + kStep;
      const detail::LossProbe up = detail::train_loss_probe(model, sample);
      w[i] = keep - kStep;
      const detail::LossProbe dn = detail::train_loss_probe(model, sample);
      w[i] = keep;
      // A flipped pool argmax or activation branch inside the interval makes
      // the loss only piecewise smooth there; central differences do not
      // apply, so redraw the probe.
      if (up.signature != dn.signature || up.signature != base.signature) continue;
      ++taken;
      const double numeric = (up.loss - dn.loss) / (2.0 * kStep);
      worst = std::max(worst, oracle::gradient_rel_error(analytic[i], numeric));
    }
    if (taken < samples_per_tensor) {
      return {"cnn finite-difference check: too many branch-crossing probes", 1.0, false};
    }
  }
  return {"cnn finite-difference check (" + std::to_string(config.input_size) + "x" +
              std::to_string(config.input_size) + ")",
          worst, worst < kTolerance};
}

/// BPTT check for the recurrent cell over a short random sequence; every
/// parameter coordinate is probed.
inline Result check_rnn(std::int64_t hidden = 8, int steps = 4, std::uint64_t seed = 77) {
  RnnCell cell = build_cell(hidden, seed);
  Rng rng(seed + 1);
  std::vector<ExpressionDistribution> inputs;
  std::vector<int> targets;
  for (int s = 0; s < steps; ++s) {
    Tensor logits = selfcheck::random_tensor(rng, {kNumClasses}, -1.0, 1.0);
    inputs.push_back(ExpressionDistribution::from_tensor(
        activate(ActivationKind::SOFTMAX_STANDARD, logits), true));
    targets.push_back(static_cast<int>(rng.below(kNumClasses)));
  }

  auto record = [&](GradTape& t, int u, int w, int v, int b_f, int b_o) {
    int state = t.leaf(Tensor({cell.hidden}, 0.0));
    int total = -1;
    for (int s = 0; s < steps; ++s) {
      int x = t.leaf(inputs[static_cast<std::size_t>(s)].to_tensor());
      int pre = tape::add(t, tape::dense(t, x, u, b_f), tape::matvec(t, state, w));
      state = tape::activation(t, cell.hidden_activation, pre);
      int logits = tape::dense(t, state, v, b_o);
      int loss = tape::softmax_xent(t, logits, targets[static_cast<std::size_t>(s)]);
      total = total < 0 ? loss : tape::add(t, total, loss);
    }
    return tape::scale(t, total, 1.0 / steps);
  };

  GradTape t;
  const int u = t.leaf_ref(&cell.u), w = t.leaf_ref(&cell.w), v = t.leaf_ref(&cell.v);
  const int b_f = t.leaf_ref(&cell.b_f), b_o = t.leaf_ref(&cell.b_o);
  t.backward(record(t, u, w, v, b_f, b_o));

  auto loss_value = [&]() {
    GradTape t2;
    const int u2 = t2.leaf_ref(&cell.u), w2 = t2.leaf_ref(&cell.w), v2 = t2.leaf_ref(&cell.v);
    const int bf2 = t2.leaf_ref(&cell.b_f), bo2 = t2.leaf_ref(&cell.b_o);
    return t2.value(record(t2, u2, w2, v2, bf2, bo2))[0];
  };

  Tensor* params[] = {&cell.u, &cell.w, &cell.v, &cell.b_f, &cell.b_o};
  const int ids[] = {u, w, v, b_f, b_o};
  double worst = 0.0;
  for (std::size_t p = 0; p < 5; ++p) {
    Tensor& wt = *params[p];
    const Tensor& analytic = t.grad(ids[p]);
    for (std::size_t i = 0; i < wt.numel(); ++i) {
      const double keep = wt[i];
      wt[i] = keep + kStep;
      const double lp = loss_value();
      wt[i] = keep - kStep;
      const double lm = loss_value();
      wt[i] = keep;
      worst = std::max(worst, oracle::gradient_rel_error(analytic[i], (lp - lm) / (2.0 * kStep)));
    }
  }
  return {"rnn cell finite-difference check (BPTT over " + std::to_string(steps) + " steps)",
          worst, worst < kTolerance};
}

}  // namespace fer::gradcheck
