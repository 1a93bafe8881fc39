#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fer/classes.hpp"
#include "fer/image.hpp"
#include "fer/landmarks.hpp"
#include "fer/rng.hpp"
#include "fer/tape.hpp"

namespace fer {

// conv1: 32 3x3 filters stride 1, batch norm, no pooling.
// conv2: 64 3x3 filters stride 1, batch norm, 2x2 max pool.
// FC-512 with the configured sigmoid, then a 7-way head.
inline constexpr std::int64_t kConv1Filters = 32;
inline constexpr std::int64_t kConv2Filters = 64;
inline constexpr std::int64_t kFcWidth = 512;

struct CnnConfig {
  std::int64_t input_size = 64;  // 64 (full-64) or 32 (reduced-32)
  Padding padding = Padding::kValid;
  ActivationKind fc_activation = ActivationKind::SIGMOID_EQ1;
  ActivationKind head_activation = ActivationKind::SOFTMAX_STANDARD;
  bool aux_landmarks = false;
  std::uint64_t seed = 1;

  void validate() const {
    if (input_size != 64 && input_size != 32) {
      throw Error("unsupported input size " + std::to_string(input_size) +
                  "; supported profiles: 64 (full-64), 32 (reduced-32)");
    }
    if (!is_softmax(head_activation)) {
      throw Error("head activation must be a softmax kind");
    }
  }
};

struct CnnModel {
  CnnConfig config;
  Tensor conv1;                    // 3x3x1x32
  Tensor bn1_gamma, bn1_beta;      // 32
  BatchNormState bn1_state;
  Tensor conv2;                    // 3x3x32x64
  Tensor bn2_gamma, bn2_beta;      // 64
  BatchNormState bn2_state;
  Tensor fc_w, fc_b;               // (flat [+272]) x 512, 512
  Tensor head_w, head_b;           // 512 x 7, 7

  /// conv1 out, conv2 out, pool out, flatten, fc, head extents.
  std::vector<std::vector<std::int64_t>> shape_trace() const {
    const std::int64_t n = config.input_size;
    const ConvGeometry g1 = conv2d_geometry(n, n, 3, 3, 1, config.padding);
    const ConvGeometry g2 = conv2d_geometry(g1.out_h, g1.out_w, 3, 3, 1, config.padding);
    const std::int64_t ph = g2.out_h / 2, pw = g2.out_w / 2;
    std::int64_t flat = ph * pw * kConv2Filters;
    if (config.aux_landmarks) flat += kProfileLength;
    return {{g1.out_h, g1.out_w, kConv1Filters},
            {g2.out_h, g2.out_w, kConv2Filters},
            {ph, pw, kConv2Filters},
            {flat},
            {kFcWidth},
            {kNumClasses}};
  }
};

namespace detail {

inline Tensor glorot_uniform(Rng& rng, std::vector<std::int64_t> shape, double fan_in,
                             double fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

}  // namespace detail

/// Deterministic Glorot-uniform build: the same seed yields bit-identical
/// parameters.
inline CnnModel build_model(const CnnConfig& config) {
  config.validate();
  CnnModel m;
  m.config = config;
  Rng rng(config.seed);
  m.conv1 = detail::glorot_uniform(rng, {3, 3, 1, kConv1Filters}, 9.0, 9.0 * kConv1Filters);
  m.bn1_gamma = Tensor({kConv1Filters}, 1.0);
  m.bn1_beta = Tensor({kConv1Filters}, 0.0);
  m.bn1_state = BatchNormState::fresh(kConv1Filters);
  m.conv2 = detail::glorot_uniform(rng, {3, 3, kConv1Filters, kConv2Filters},
                                   9.0 * kConv1Filters, 9.0 * kConv2Filters);
  m.bn2_gamma = Tensor({kConv2Filters}, 1.0);
  m.bn2_beta = Tensor({kConv2Filters}, 0.0);
  m.bn2_state = BatchNormState::fresh(kConv2Filters);
  const std::int64_t flat = m.shape_trace()[3][0];
  m.fc_w = detail::glorot_uniform(rng, {flat, kFcWidth}, static_cast<double>(flat),
                                  static_cast<double>(kFcWidth));
  m.fc_b = Tensor({kFcWidth}, 0.0);
  m.head_w = detail::glorot_uniform(rng, {kFcWidth, kNumClasses},
                                    static_cast<double>(kFcWidth), kNumClasses);
  m.head_b = Tensor({kNumClasses}, 0.0);
  return m;
}

/// All-zero parameters; with a standard softmax head every input maps to the
/// uniform distribution.
inline CnnModel zero_model(const CnnConfig& config) {
  CnnModel m = build_model(config);
  for (Tensor* t : {&m.conv1, &m.bn1_gamma, &m.bn1_beta, &m.conv2, &m.bn2_gamma, &m.bn2_beta,
                    &m.fc_w, &m.fc_b, &m.head_w, &m.head_b}) {
    t->fill(0.0);
  }
  return m;
}

namespace detail {

inline void check_forward_input(const CnnModel& m, const Tensor& image,
                                const std::optional<std::vector<double>>& aux) {
  const std::int64_t n = m.config.input_size;
  if (image.rank() != 3 || image.dim(0) != n || image.dim(1) != n || image.dim(2) != 1) {
    throw DimensionError("model expects a " + std::to_string(n) + "x" + std::to_string(n) +
                         "x1 image, got " + image.shape_string());
  }
  if (m.config.aux_landmarks && !aux) {
    throw Error("model was built with aux_landmarks: the 272-value profile is required");
  }
  if (!m.config.aux_landmarks && aux) {
    throw Error("model was built without aux_landmarks but a profile was supplied");
  }
  if (aux && aux->size() != kProfileLength) {
    throw DimensionError("aux profile must have 272 values, got " + std::to_string(aux->size()));
  }
}

}  // namespace detail

/// Inference forward pass; pure in (model, image, aux). Image values are the
/// caller's [0,1]-scaled pixels.
inline ExpressionDistribution forward(const CnnModel& model, const Tensor& image,
                                      const std::optional<std::vector<double>>& aux = std::nullopt,
                                      BnMode bn_mode = BnMode::kInfer) {
  detail::check_forward_input(model, image, aux);
  auto norm = [bn_mode](const Tensor& v, const Tensor& gamma, const Tensor& beta,
                        const BatchNormState& state) {
    if (bn_mode == BnMode::kInfer) return batch_norm_infer(v, gamma, beta, state);
    BatchNormState scratch = state;
    return batch_norm(v, gamma, beta, scratch, BnMode::kTrain, nullptr, /*update_state=*/false);
  };
  Tensor x = conv2d(image, model.conv1, 1, model.config.padding);
  x = norm(x, model.bn1_gamma, model.bn1_beta, model.bn1_state);
  x = conv2d(x, model.conv2, 1, model.config.padding);
  x = norm(x, model.bn2_gamma, model.bn2_beta, model.bn2_state);
  x = max_pool2d(x);
  Tensor flat = x.reshaped({static_cast<std::int64_t>(x.numel())});
  if (aux) {
    std::vector<double> joined(flat.values());
    joined.insert(joined.end(), aux->begin(), aux->end());
    const auto total = static_cast<std::int64_t>(joined.size());
    flat = Tensor({total}, std::move(joined));
  }
  Tensor hidden = activate(model.config.fc_activation, dense(flat, model.fc_w, model.fc_b));
  Tensor logits = dense(hidden, model.head_w, model.head_b);
  Tensor scores = activate(model.config.head_activation, logits);
  return ExpressionDistribution::from_tensor(
      scores, model.config.head_activation == ActivationKind::SOFTMAX_STANDARD);
}

inline ExpressionClass classify(const CnnModel& model, const Tensor& image,
                                const std::optional<std::vector<double>>& aux = std::nullopt) {
  return dominant(forward(model, image, aux));
}

struct LabeledImage {
  Tensor image;  // NxNx1, values in [0,1]
  std::optional<std::vector<double>> aux;
  ExpressionClass label = ExpressionClass::kAnger;
};

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 5;
  int batch_size = 16;
  std::uint64_t seed = 1;
  enum class Optimizer { kSgd, kSgdMomentum09 };
  Optimizer optimizer = Optimizer::kSgdMomentum09;
  // loss is fixed: cross-entropy on the softmax head

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (epochs < 1) throw Error("epochs must be >= 1");
    if (batch_size < 1) throw Error("batch size must be >= 1");
  }
};

struct TrainMetrics {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;  // post-epoch pass over the training set
};

namespace detail {

struct CnnLeaves {
  int conv1, bn1_gamma, bn1_beta, conv2, bn2_gamma, bn2_beta, fc_w, fc_b, head_w, head_b;
};

inline CnnLeaves put_leaves(GradTape& t, const CnnModel& m) {
  // borrowed leaves: the model outlives every batch tape
  return CnnLeaves{t.leaf_ref(&m.conv1),     t.leaf_ref(&m.bn1_gamma),
                   t.leaf_ref(&m.bn1_beta),  t.leaf_ref(&m.conv2),
                   t.leaf_ref(&m.bn2_gamma), t.leaf_ref(&m.bn2_beta),
                   t.leaf_ref(&m.fc_w),      t.leaf_ref(&m.fc_b),
                   t.leaf_ref(&m.head_w),    t.leaf_ref(&m.head_b)};
}

/// Records a training-mode forward pass and the cross-entropy loss of one
/// sample. Batch statistics of both norms land in the caches when given.
inline int record_train_loss(GradTape& t, const CnnLeaves& L, const CnnModel& model,
                             const LabeledImage& sample, BnCache* c1 = nullptr,
                             BnCache* c2 = nullptr) {
  detail::check_forward_input(model, sample.image, sample.aux);
  int x = t.leaf_ref(&sample.image);
  x = tape::conv2d(t, x, L.conv1, 1, model.config.padding);
  x = tape::batch_norm(t, x, L.bn1_gamma, L.bn1_beta, c1);
  x = tape::conv2d(t, x, L.conv2, 1, model.config.padding);
  x = tape::batch_norm(t, x, L.bn2_gamma, L.bn2_beta, c2);
  x = tape::max_pool2d(t, x);
  x = tape::flatten(t, x);
  if (sample.aux) {
    int aux = t.leaf(tensor1(*sample.aux));
    x = tape::concat(t, x, aux);
  }
  int hidden = tape::activation(t, model.config.fc_activation,
                                tape::dense(t, x, L.fc_w, L.fc_b));
  int logits = tape::dense(t, hidden, L.head_w, L.head_b);
  return tape::softmax_xent(t, logits, static_cast<int>(sample.label));
}

struct LossProbe {
  double loss = 0.0;
  // Hash of every discrete branch taken (pool argmaxes, piecewise activation
  // regions). Central differences are only meaningful between two points
  // with the same signature.
  std::uint64_t signature = 0;
};

struct Fnv64 {
  std::uint64_t h = 1469598103934665603ull;
  void add(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
};

inline void hash_activation_branches(Fnv64& sig, ActivationKind kind, const Tensor& pre) {
  switch (kind) {
    case ActivationKind::SIGMOID_EQ1:
    case ActivationKind::SOFTMAX_EQ6_LITERAL:
      for (std::size_t i = 0; i < pre.numel(); ++i) sig.add(pre[i] > 0.0 ? 1 : 0);
      break;
    case ActivationKind::HARD_CLAMP_EQ8:
      for (std::size_t i = 0; i < pre.numel(); ++i) {
        sig.add(pre[i] <= -1.0 ? 0u : (pre[i] >= 1.0 ? 2u : 1u));
      }
      break;
    default:
      break;  // smooth everywhere
  }
}

/// Pure (tape-free) training-mode loss of one sample plus the branch
/// signature; the finite-difference harness compares signatures across the
/// probe interval.
inline LossProbe train_loss_probe(const CnnModel& m, const LabeledImage& sample) {
  check_forward_input(m, sample.image, sample.aux);
  Fnv64 sig;
  auto bn_nostat = [](const Tensor& v, const Tensor& gamma, const Tensor& beta) {
    BatchNormState scratch = BatchNormState::fresh(gamma.dim(0));
    return batch_norm(v, gamma, beta, scratch, BnMode::kTrain, nullptr, false);
  };
  Tensor x = conv2d(sample.image, m.conv1, 1, m.config.padding);
  x = bn_nostat(x, m.bn1_gamma, m.bn1_beta);
  x = conv2d(x, m.conv2, 1, m.config.padding);
  x = bn_nostat(x, m.bn2_gamma, m.bn2_beta);
  std::vector<std::int64_t> argmax;
  x = max_pool2d(x, &argmax);
  for (std::int64_t a : argmax) sig.add(static_cast<std::uint64_t>(a));
  Tensor flat = x.reshaped({static_cast<std::int64_t>(x.numel())});
  if (sample.aux) {
    std::vector<double> joined(flat.values());
    joined.insert(joined.end(), sample.aux->begin(), sample.aux->end());
    const auto total = static_cast<std::int64_t>(joined.size());
    flat = Tensor({total}, std::move(joined));
  }
  Tensor pre = dense(flat, m.fc_w, m.fc_b);
  hash_activation_branches(sig, m.config.fc_activation, pre);
  Tensor hidden = activate(m.config.fc_activation, pre);
  Tensor logits = dense(hidden, m.head_w, m.head_b);
  Tensor probs = activate(ActivationKind::SOFTMAX_STANDARD, logits);
  const double p = std::max(probs[static_cast<std::size_t>(sample.label)], 1e-300);
  return {-std::log(p), sig.h};
}

inline void fold_running(BatchNormState& st, const BnCache& cache) {
  for (std::size_t i = 0; i < st.running_mean.numel(); ++i) {
    st.running_mean[i] = kBnMomentum * st.running_mean[i] + (1.0 - kBnMomentum) * cache.mean[i];
    st.running_var[i] = kBnMomentum * st.running_var[i] + (1.0 - kBnMomentum) * cache.var[i];
  }
}

}  // namespace detail

inline double evaluate_accuracy(const CnnModel& model, const std::vector<LabeledImage>& data) {
  if (data.empty()) throw Error("cannot evaluate on an empty dataset");
  std::size_t correct = 0;
  for (const LabeledImage& s : data) {
    if (classify(model, s.image, s.aux) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Mini-batch gradient descent with cross-entropy. Deterministic for a fixed
/// seed and dataset order; per-epoch accuracy is a post-epoch pass over the
/// training set.
inline TrainMetrics train(CnnModel& model, const std::vector<LabeledImage>& dataset,
                          const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw Error("cannot train on an empty dataset");
  if (model.config.head_activation != ActivationKind::SOFTMAX_STANDARD) {
    throw Error("training requires the softmax_standard head (cross-entropy)");
  }
  for (const LabeledImage& s : dataset) detail::check_forward_input(model, s.image, s.aux);

  Tensor* params[] = {&model.conv1, &model.bn1_gamma, &model.bn1_beta, &model.conv2,
                      &model.bn2_gamma, &model.bn2_beta, &model.fc_w,  &model.fc_b,
                      &model.head_w, &model.head_b};
  std::vector<Tensor> velocity;
  if (config.optimizer == TrainConfig::Optimizer::kSgdMomentum09) {
    for (Tensor* p : params) velocity.emplace_back(p->shape());
  }

  TrainMetrics metrics;
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(config.seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t cursor = 0;
    int batch_index = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), cursor + static_cast<std::size_t>(config.batch_size));
      const auto batch_n = static_cast<int>(batch_end - cursor);

      GradTape t;
      detail::CnnLeaves L = detail::put_leaves(t, model);
      int total = -1;
      for (std::size_t i = cursor; i < batch_end; ++i) {
        BnCache c1, c2;
        int loss = detail::record_train_loss(t, L, model, dataset[order[i]], &c1, &c2);
        detail::fold_running(model.bn1_state, c1);
        detail::fold_running(model.bn2_state, c2);
        total = total < 0 ? loss : tape::add(t, total, loss);
      }
      int mean = tape::scale(t, total, 1.0 / batch_n);
      const double batch_loss = t.value(mean)[0];
      if (!std::isfinite(batch_loss)) {
        throw Error("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                    std::to_string(batch_index + 1));
      }
      loss_sum += batch_loss * batch_n;
      t.backward(mean);

      const int leaf_ids[] = {L.conv1, L.bn1_gamma, L.bn1_beta, L.conv2, L.bn2_gamma,
                              L.bn2_beta, L.fc_w,   L.fc_b,     L.head_w, L.head_b};
      for (std::size_t p = 0; p < 10; ++p) {
        const Tensor& g = t.grad(leaf_ids[p]);
        Tensor& w = *params[p];
        if (config.optimizer == TrainConfig::Optimizer::kSgdMomentum09) {
          Tensor& v = velocity[p];
          for (std::size_t i = 0; i < w.numel(); ++i) {
            v[i] = 0.9 * v[i] + g[i];
            w[i] -= config.learning_rate * v[i];
          }
        } else {
          for (std::size_t i = 0; i < w.numel(); ++i) w[i] -= config.learning_rate * g[i];
        }
      }
      cursor = batch_end;
      ++batch_index;
    }
    metrics.epoch_loss.push_back(loss_sum / static_cast<double>(dataset.size()));
    metrics.epoch_accuracy.push_back(evaluate_accuracy(model, dataset));
  }
  return metrics;
}

/// Scales raw [0,255] pixels, resizes to the model profile and derives the
/// aux profile when the model wants one.
inline LabeledImage prepare_input(const CnnConfig& config, const Tensor& raw_gray,
                                  const std::optional<LandmarkSet>& landmarks = std::nullopt,
                                  ExpressionClass label = ExpressionClass::kAnger) {
  LabeledImage s;
  Tensor sized = (raw_gray.dim(0) == config.input_size && raw_gray.dim(1) == config.input_size)
                     ? raw_gray
                     : resize(raw_gray, config.input_size, config.input_size);
  for (std::size_t i = 0; i < sized.numel(); ++i) sized[i] /= 255.0;
  s.image = std::move(sized);
  if (config.aux_landmarks) {
    if (!landmarks) {
      throw Error("model profile requires landmarks but none were provided");
    }
    s.aux = profile_features(normalize_face(*landmarks)).flattened();
  }
  s.label = label;
  return s;
}

}  // namespace fer
