#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fer/activations.hpp"
#include "fer/dataset.hpp"
#include "fer/layers.hpp"
#include "fer/oracle.hpp"
#include "fer/rng.hpp"

// Seeded oracle suites behind the `selftest` CLI subcommand; the unit and
// acceptance suites run the same checks.
namespace fer::selfcheck {

struct Check {
  std::string name;
  bool pass = false;
  double metric = 0.0;  // worst error observed, when meaningful
};

inline Tensor random_tensor(Rng& rng, std::vector<std::int64_t> shape, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// conv2d vs the nested-loop oracle over `cases` seeded random instances.
inline Check conv_oracle_suite(int cases = 100, std::uint64_t seed = 101) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < cases; ++i) {
    const std::int64_t kh = 1 + static_cast<std::int64_t>(rng.below(3));
    const std::int64_t kw = 1 + static_cast<std::int64_t>(rng.below(3));
    const std::int64_t h = kh + static_cast<std::int64_t>(rng.below(9));
    const std::int64_t w = kw + static_cast<std::int64_t>(rng.below(9));
    const std::int64_t c = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t f = 1 + static_cast<std::int64_t>(rng.below(6));
    const std::int64_t stride = 1 + static_cast<std::int64_t>(rng.below(2));
    const Padding pad = rng.below(2) == 0 ? Padding::kValid : Padding::kSame;
    Tensor x = random_tensor(rng, {h, w, c});
    Tensor k = random_tensor(rng, {kh, kw, c, f});
    worst = std::max(worst, oracle::max_abs_diff(conv2d(x, k, stride, pad),
                                                 oracle::conv2d_naive(x, k, stride, pad)));
  }
  return {"conv2d vs nested-loop oracle", worst <= 1e-9, worst};
}

inline Check pool_oracle_suite(int cases = 100, std::uint64_t seed = 102) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < cases; ++i) {
    const std::int64_t h = 2 * (1 + static_cast<std::int64_t>(rng.below(6)));
    const std::int64_t w = 2 * (1 + static_cast<std::int64_t>(rng.below(6)));
    const std::int64_t c = 1 + static_cast<std::int64_t>(rng.below(4));
    Tensor x = random_tensor(rng, {h, w, c});
    worst = std::max(worst, oracle::max_abs_diff(max_pool2d(x), oracle::max_pool2d_naive(x)));
  }
  return {"max_pool2d vs window-enumeration oracle", worst == 0.0, worst};
}

inline Check batch_norm_oracle_suite(int cases = 100, std::uint64_t seed = 103) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < cases; ++i) {
    const std::int64_t n = 2 + static_cast<std::int64_t>(rng.below(15));
    const std::int64_t c = 1 + static_cast<std::int64_t>(rng.below(6));
    Tensor x = random_tensor(rng, {n, c}, -3.0, 3.0);
    Tensor gamma = random_tensor(rng, {c}, 0.2, 2.0);
    Tensor beta = random_tensor(rng, {c}, -1.0, 1.0);
    BatchNormState state = BatchNormState::fresh(c);
    Tensor got = batch_norm(x, gamma, beta, state, BnMode::kTrain);
    worst = std::max(worst, oracle::max_abs_diff(got, oracle::batch_norm_naive(x, gamma, beta)));
  }
  return {"batch_norm vs two-pass statistics oracle", worst <= 1e-9, worst};
}

inline Check dense_oracle_suite(int cases = 100, std::uint64_t seed = 104) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < cases; ++i) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(24));
    const std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(16));
    Tensor x = random_tensor(rng, {n});
    Tensor w = random_tensor(rng, {n, m});
    Tensor b = random_tensor(rng, {m});
    worst = std::max(worst, oracle::max_abs_diff(dense(x, w, b), oracle::dense_naive(x, w, b)));
  }
  return {"dense vs explicit-summation oracle", worst <= 1e-12, worst};
}

/// Every literal/standard activation fixture and invariant in one sweep.
inline std::vector<Check> activation_fidelity(std::uint64_t seed = 105) {
  std::vector<Check> out;
  auto push = [&out](const std::string& name, bool pass, double metric = 0.0) {
    out.push_back({name, pass, metric});
  };

  // Piecewise fixtures.
  {
    Tensor y = activate(ActivationKind::SIGMOID_EQ1, tensor1({-5.0}));
    push("sigmoid_eq1(-5) == 0 exactly", y[0] == 0.0, y[0]);
    y = activate(ActivationKind::SIGMOID_EQ1, tensor1({0.0}));
    push("sigmoid_eq1(0) == 0 exactly", y[0] == 0.0, y[0]);
    y = activate(ActivationKind::SIGMOID_EQ1, tensor1({1.0}));
    const double err = std::abs(y[0] - 0.7310585786);
    push("sigmoid_eq1(1) == 0.7310585786", err < 1e-9, err);
  }
  {
    Tensor y = activate(ActivationKind::SOFTMAX_STANDARD, Tensor({7}, 3.25));
    double worst = 0.0;
    for (std::size_t i = 0; i < 7; ++i) worst = std::max(worst, std::abs(y[i] - 1.0 / 7.0));
    push("softmax_standard equal logits -> 1/7 each", worst < 1e-12, worst);

    y = activate(ActivationKind::SOFTMAX_STANDARD, tensor1({1.0, 2.0, 3.0}));
    const double e1 = std::abs(y[0] - 0.090031), e2 = std::abs(y[1] - 0.244728),
                 e3 = std::abs(y[2] - 0.665241);
    push("softmax_standard([1,2,3]) six-digit fixture", e1 < 5e-7 && e2 < 5e-7 && e3 < 5e-7,
         std::max({e1, e2, e3}));
  }
  {
    Tensor y = activate(ActivationKind::HARD_CLAMP_EQ8, tensor1({0.5, -2.0, 7.0}));
    push("hard_clamp_eq8 branches (0.5, -2, 7) -> (0.5, -1, 1)",
         y[0] == 0.5 && y[1] == -1.0 && y[2] == 1.0);
  }

  Rng rng(seed);
  // Softmax invariants on random 7-logit vectors.
  {
    double worst_sum = 0.0;
    bool open_interval = true, literal_bounded = true;
    for (int i = 0; i < 200; ++i) {
      Tensor z = random_tensor(rng, {7}, -4.0, 4.0);
      Tensor s = activate(ActivationKind::SOFTMAX_STANDARD, z);
      Tensor lit = activate(ActivationKind::SOFTMAX_EQ6_LITERAL, z);
      double sum = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        sum += s[j];
        open_interval = open_interval && s[j] > 0.0 && s[j] < 1.0;
        literal_bounded = literal_bounded && lit[j] <= s[j] + 1e-15;
        if (!(z[j] > 0.0) && lit[j] != 0.0) literal_bounded = false;
      }
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
    push("softmax_standard sums to 1 within 1e-9, components in (0,1)",
         worst_sum <= 1e-9 && open_interval, worst_sum);
    push("softmax_eq6_literal <= standard component-wise, exact zeros on x<=0", literal_bounded);
  }
  // Clamp idempotence, exact.
  {
    bool idem = true;
    for (int i = 0; i < 200; ++i) {
      Tensor z = random_tensor(rng, {5}, -3.0, 3.0);
      Tensor once = activate(ActivationKind::HARD_CLAMP_EQ8, z);
      Tensor twice = activate(ActivationKind::HARD_CLAMP_EQ8, once);
      for (std::size_t j = 0; j < z.numel(); ++j) idem = idem && once[j] == twice[j];
    }
    push("hard_clamp_eq8 idempotent (bitwise)", idem);
  }
  // sigmoid_eq1 range {0} u (0.5, 1) and monotone on x > 0.
  {
    bool range_ok = true, monotone = true;
    double prev = 0.5;
    for (int i = 1; i <= 1000; ++i) {
      const double x = 12.0 * i / 1000.0;
      Tensor y = activate(ActivationKind::SIGMOID_EQ1, tensor1({x}));
      range_ok = range_ok && y[0] > 0.5 && y[0] < 1.0;
      monotone = monotone && y[0] >= prev;
      prev = y[0];
    }
    for (int i = 0; i < 200; ++i) {
      Tensor z = random_tensor(rng, {3}, -6.0, 6.0);
      Tensor y = activate(ActivationKind::SIGMOID_EQ1, z);
      for (std::size_t j = 0; j < 3; ++j) {
        range_ok = range_ok && (y[j] == 0.0 || (y[j] > 0.5 && y[j] < 1.0));
      }
    }
    push("sigmoid_eq1 range {0} u (0.5,1), monotone on x > 0", range_ok && monotone);
  }
  // Determinism: identical inputs, bitwise identical outputs.
  {
    Tensor z = random_tensor(rng, {64}, -2.0, 2.0);
    bool ok = true;
    for (ActivationKind k : {ActivationKind::SIGMOID_EQ1, ActivationKind::SIGMOID_STANDARD,
                             ActivationKind::HARD_CLAMP_EQ8, ActivationKind::IDENTITY}) {
      Tensor a = activate(k, z), b = activate(k, z);
      for (std::size_t j = 0; j < z.numel(); ++j) ok = ok && a[j] == b[j];
    }
    push("activations deterministic (bitwise)", ok);
  }
  return out;
}

/// split_dataset and kfold partition properties over many seeds, plus the
/// 304-record fold-size fixture {61,61,61,61,60}.
inline Check partition_suite(int seeds = 50) {
  DatasetManifest manifest;
  const std::size_t per_class[kNumClasses] = {44, 44, 44, 44, 44, 44, 40};  // 304 records
  for (int c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < per_class[static_cast<std::size_t>(c)]; ++i) {
      ManifestRecord r;
      r.image = std::string(class_name(static_cast<ExpressionClass>(c))) + "_" +
                std::to_string(i) + ".pgm";
      r.label = static_cast<ExpressionClass>(c);
      manifest.records.push_back(std::move(r));
    }
  }

  auto key_multiset = [](const DatasetManifest& m) {
    std::vector<std::string> keys;
    keys.reserve(m.records.size());
    for (const auto& r : m.records) keys.push_back(r.image);
    std::sort(keys.begin(), keys.end());
    return keys;
  };
  const auto all = key_multiset(manifest);

  bool ok = true;
  for (int seed = 0; seed < seeds && ok; ++seed) {
    SplitResult s = split_dataset(manifest, 0.8, static_cast<std::uint64_t>(seed));
    ok = ok && s.train.size() + s.test.size() == manifest.size();
    ok = ok && s.train.size() == 243;  // round(0.8 * 304)
    DatasetManifest joined;
    joined.records = s.train.records;
    joined.records.insert(joined.records.end(), s.test.records.begin(), s.test.records.end());
    ok = ok && key_multiset(joined) == all;

    auto folds = kfold(manifest, 5, static_cast<std::uint64_t>(seed));
    DatasetManifest fold_union;
    std::size_t largest = 0, smallest = manifest.size();
    for (const auto& f : folds) {
      fold_union.records.insert(fold_union.records.end(), f.records.begin(), f.records.end());
      largest = std::max(largest, f.size());
      smallest = std::min(smallest, f.size());
    }
    ok = ok && key_multiset(fold_union) == all;
    ok = ok && largest - smallest <= 1;
    // determinism per seed
    auto again = kfold(manifest, 5, static_cast<std::uint64_t>(seed));
    for (std::size_t i = 0; i < folds.size() && ok; ++i) {
      ok = ok && folds[i].size() == again[i].size();
      for (std::size_t j = 0; j < folds[i].size() && ok; ++j) {
        ok = ok && folds[i].records[j].image == again[i].records[j].image;
      }
    }
  }
  auto sizes_ok = [&manifest]() {
    auto folds = kfold(manifest, 5, 7);
    return folds[0].size() == 61 && folds[1].size() == 61 && folds[2].size() == 61 &&
           folds[3].size() == 61 && folds[4].size() == 60;
  };
  ok = ok && sizes_ok();
  return {"split/kfold partition properties over seeded runs", ok, 0.0};
}

}  // namespace fer::selfcheck
