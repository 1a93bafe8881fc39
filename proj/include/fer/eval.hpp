#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "fer/cnn.hpp"
#include "fer/dataset.hpp"
#include "fer/rnn.hpp"

namespace fer {

/// One-vs-rest tallies for a single class.
struct Counts {
  long long tp = 0, tn = 0, fp = 0, fn = 0;
  long long total() const { return tp + tn + fp + fn; }
};

/// The published accuracy equation: (TP + TN) / (TP + TN + FP + FN).
inline double accuracy(const Counts& c) {
  if (c.total() <= 0) throw Error("accuracy denominator is zero");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

using ConfusionMatrix = std::array<std::array<long long, kNumClasses>, kNumClasses>;

/// cell (i, j) counts samples of true class i predicted as class j.
inline ConfusionMatrix confusion(const std::vector<ExpressionClass>& predictions,
                                 const std::vector<ExpressionClass>& labels) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("confusion needs equal-length predictions (" +
                         std::to_string(predictions.size()) + ") and labels (" +
                         std::to_string(labels.size()) + ")");
  }
  ConfusionMatrix m{};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    m[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])]++;
  }
  return m;
}

inline Counts counts_for_class(const ConfusionMatrix& m, ExpressionClass cls) {
  const auto c = static_cast<std::size_t>(cls);
  Counts out;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      const long long n = m[i][j];
      if (i == c && j == c) {
        out.tp += n;
      } else if (i == c) {
        out.fn += n;
      } else if (j == c) {
        out.fp += n;
      } else {
        out.tn += n;
      }
    }
  }
  return out;
}

/// Micro accuracy: correct / total.
inline double overall_accuracy(const ConfusionMatrix& m) {
  long long correct = 0, total = 0;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      total += m[i][j];
      if (i == j) correct += m[i][j];
    }
  }
  if (total == 0) throw Error("accuracy denominator is zero");
  return static_cast<double>(correct) / static_cast<double>(total);
}

inline ExpressionDistribution mean_distribution(const std::vector<ExpressionDistribution>& dists) {
  if (dists.empty()) throw Error("mean_distribution needs a non-empty list");
  std::array<double, kNumClasses> mean{};
  bool normalized = true;
  for (const auto& d : dists) {
    normalized = normalized && d.normalized;
    for (int c = 0; c < kNumClasses; ++c) {
      mean[static_cast<std::size_t>(c)] += d.scores[static_cast<std::size_t>(c)];
    }
  }
  for (int c = 0; c < kNumClasses; ++c) {
    mean[static_cast<std::size_t>(c)] /= static_cast<double>(dists.size());
  }
  return ExpressionDistribution::make(mean, normalized);
}

/// Reads every manifest record into model-ready samples. Relative paths
/// resolve against the manifest's directory.
inline std::vector<LabeledImage> load_labeled_dataset(const DatasetManifest& manifest,
                                                      const std::string& base_dir,
                                                      const CnnConfig& config) {
  namespace fs = std::filesystem;
  std::vector<LabeledImage> out;
  out.reserve(manifest.size());
  for (const ManifestRecord& rec : manifest.records) {
    const fs::path img = fs::path(rec.image).is_absolute() ? fs::path(rec.image)
                                                           : fs::path(base_dir) / rec.image;
    Tensor raw = load_image_gray(img.string());
    std::optional<LandmarkSet> lm;
    if (config.aux_landmarks) {
      if (rec.landmarks.empty()) {
        throw Error("record " + rec.image + " has no landmark sidecar but the model needs one");
      }
      const fs::path lp = fs::path(rec.landmarks).is_absolute()
                              ? fs::path(rec.landmarks)
                              : fs::path(base_dir) / rec.landmarks;
      lm = load_landmarks(lp.string());
    }
    out.push_back(prepare_input(config, raw, lm, rec.label));
  }
  return out;
}

inline ConfusionMatrix model_confusion(const CnnModel& model,
                                       const std::vector<LabeledImage>& data) {
  std::vector<ExpressionClass> preds, labels;
  preds.reserve(data.size());
  labels.reserve(data.size());
  for (const LabeledImage& s : data) {
    preds.push_back(classify(model, s.image, s.aux));
    labels.push_back(s.label);
  }
  return confusion(preds, labels);
}

struct FoldResult {
  int fold_index = 0;
  std::vector<double> train_accuracy;  // per epoch
  std::vector<double> train_loss;      // per epoch
  double test_accuracy = 0.0;
  ConfusionMatrix test_confusion{};
};

struct CvSummary {
  std::vector<FoldResult> folds;
  double mean_test_accuracy = 0.0;
  std::vector<double> mean_train_accuracy;  // per epoch, averaged over folds
};

/// k-fold cross-validation: every fold trains a fresh model from the same
/// seeds on the other k-1 folds and tests on its own slice.
inline CvSummary cross_validate(const DatasetManifest& manifest, const std::string& base_dir,
                                const CnnConfig& model_config, const TrainConfig& train_config,
                                int k, std::uint64_t seed) {
  const std::vector<DatasetManifest> folds = kfold(manifest, k, seed);
  std::vector<std::vector<LabeledImage>> fold_data;
  fold_data.reserve(folds.size());
  for (const auto& f : folds) {
    fold_data.push_back(load_labeled_dataset(f, base_dir, model_config));
  }

  CvSummary summary;
  summary.mean_train_accuracy.assign(static_cast<std::size_t>(train_config.epochs), 0.0);
  for (int i = 0; i < k; ++i) {
    std::vector<LabeledImage> train_set;
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      train_set.insert(train_set.end(), fold_data[static_cast<std::size_t>(j)].begin(),
                       fold_data[static_cast<std::size_t>(j)].end());
    }
    CnnModel model = build_model(model_config);
    TrainMetrics metrics = train(model, train_set, train_config);

    FoldResult fr;
    fr.fold_index = i;
    fr.train_accuracy = metrics.epoch_accuracy;
    fr.train_loss = metrics.epoch_loss;
    fr.test_confusion = model_confusion(model, fold_data[static_cast<std::size_t>(i)]);
    fr.test_accuracy = overall_accuracy(fr.test_confusion);
    summary.mean_test_accuracy += fr.test_accuracy;
    for (std::size_t e = 0; e < fr.train_accuracy.size(); ++e) {
      summary.mean_train_accuracy[e] += fr.train_accuracy[e];
    }
    summary.folds.push_back(std::move(fr));
  }
  summary.mean_test_accuracy /= k;
  for (double& v : summary.mean_train_accuracy) v /= k;
  return summary;
}

/// Flattened-pixel linear softmax model, the stand-in comparison bar next to
/// the CNN and the recurrent pipeline.
struct LinearBaseline {
  Tensor w;  // n x 7
  Tensor b;  // 7

  ExpressionDistribution forward(const Tensor& image) const {
    Tensor flat = image.reshaped({static_cast<std::int64_t>(image.numel())});
    Tensor logits = dense(flat, w, b);
    return ExpressionDistribution::from_tensor(
        activate(ActivationKind::SOFTMAX_STANDARD, logits), true);
  }
};

struct BaselineResult {
  LinearBaseline model;
  double accuracy = 0.0;  // on the evaluation set
};

/// Cross-entropy SGD on raw pixels from a zero initial map (so an untrained
/// baseline predicts the uniform distribution). epochs = 0 is allowed here.
inline BaselineResult train_baseline(const std::vector<LabeledImage>& train_set,
                                     const std::vector<LabeledImage>& eval_set,
                                     const TrainConfig& config) {
  if (train_set.empty()) throw Error("cannot train on an empty dataset");
  if (!(config.learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (config.epochs < 0) throw Error("epochs must be >= 0");
  const auto n = static_cast<std::int64_t>(train_set.front().image.numel());
  LinearBaseline lin;
  lin.w = Tensor({n, kNumClasses}, 0.0);
  lin.b = Tensor({kNumClasses}, 0.0);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(Rng::derive(config.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t end =
          std::min(order.size(), cursor + static_cast<std::size_t>(config.batch_size));
      GradTape t;
      const int w = t.leaf_ref(&lin.w), b = t.leaf_ref(&lin.b);
      int total = -1;
      for (std::size_t i = cursor; i < end; ++i) {
        const LabeledImage& s = train_set[order[i]];
        int x = t.leaf(s.image.reshaped({static_cast<std::int64_t>(s.image.numel())}));
        int logits = tape::dense(t, x, w, b);
        int loss = tape::softmax_xent(t, logits, static_cast<int>(s.label));
        total = total < 0 ? loss : tape::add(t, total, loss);
      }
      int mean = tape::scale(t, total, 1.0 / static_cast<double>(end - cursor));
      if (!std::isfinite(t.value(mean)[0])) {
        throw Error("non-finite baseline loss at epoch " + std::to_string(epoch + 1));
      }
      t.backward(mean);
      const Tensor& gw = t.grad(w);
      const Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < lin.w.numel(); ++i) lin.w[i] -= config.learning_rate * gw[i];
      for (std::size_t i = 0; i < lin.b.numel(); ++i) lin.b[i] -= config.learning_rate * gb[i];
      cursor = end;
    }
  }

  BaselineResult out;
  out.model = std::move(lin);
  if (!eval_set.empty()) {
    std::size_t correct = 0;
    for (const LabeledImage& s : eval_set) {
      if (dominant(out.model.forward(s.image)) == s.label) ++correct;
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(eval_set.size());
  }
  return out;
}

struct ComparisonResult {
  double baseline_accuracy = 0.0;
  double cnn_accuracy = 0.0;
  double rcnn_accuracy = 0.0;
};

/// The three comparison bars on one 80/20 split: the pixel baseline, the
/// CNN, and the CNN chained through a recurrent cell trained on per-class
/// distribution sequences from the training split.
inline ComparisonResult compare_models(const std::vector<LabeledImage>& train_set,
                                       const std::vector<LabeledImage>& test_set,
                                       const std::vector<LabeledImage>& baseline_train,
                                       const std::vector<LabeledImage>& baseline_test,
                                       const CnnConfig& model_config,
                                       const TrainConfig& train_config) {
  ComparisonResult out;
  out.baseline_accuracy = train_baseline(baseline_train, baseline_test, train_config).accuracy;

  CnnModel model = build_model(model_config);
  train(model, train_set, train_config);
  std::size_t correct = 0;
  std::vector<ExpressionDistribution> test_dists;
  test_dists.reserve(test_set.size());
  for (const LabeledImage& s : test_set) {
    ExpressionDistribution d = forward(model, s.image, s.aux);
    test_dists.push_back(d);
    if (dominant(d) == s.label) ++correct;
  }
  out.cnn_accuracy = static_cast<double>(correct) / static_cast<double>(test_set.size());

  // shuffled mixed-class sequences with same-step label supervision, so the
  // cell has to read its input rather than a class-constant state
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng seq_rng(Rng::derive(train_config.seed, 1005));
  seq_rng.shuffle(order);
  std::vector<ExpressionDistribution> train_dists;
  train_dists.reserve(train_set.size());
  for (const LabeledImage& s : train_set) {
    train_dists.push_back(forward(model, s.image, s.aux));
  }
  std::vector<RnnSequence> sequences;
  constexpr std::size_t kChunk = 16;
  for (std::size_t start = 0; start < order.size(); start += kChunk) {
    RnnSequence seq;
    for (std::size_t i = start; i < std::min(order.size(), start + kChunk); ++i) {
      seq.inputs.push_back(train_dists[order[i]]);
      seq.targets.push_back(train_set[order[i]].label);
    }
    sequences.push_back(std::move(seq));
  }
  RnnCell cell = build_cell(16, train_config.seed);
  TrainConfig rnn_config = train_config;
  rnn_config.epochs = std::max(train_config.epochs, 30);
  rnn_config.learning_rate = 0.05;
  train_rnn_sequences(cell, sequences, rnn_config);

  correct = 0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    RnnStepResult r = rnn_step(cell, test_dists[i], RnnState::initial(cell.hidden));
    if (dominant(r.output) == test_set[i].label) ++correct;
  }
  out.rcnn_accuracy = static_cast<double>(correct) / static_cast<double>(test_set.size());
  return out;
}

}  // namespace fer
