#include <cmath>

#include "doctest.h"
#include "fer/gradcheck.hpp"
#include "fer/rnn.hpp"
#include "fer/selfcheck.hpp"
#include "fixtures.hpp"

using namespace fer;

namespace {

ExpressionDistribution one_hot(ExpressionClass c) {
  std::array<double, 7> s{};
  s[static_cast<std::size_t>(c)] = 1.0;
  return ExpressionDistribution::make(s, true);
}

ExpressionDistribution soft_vector(std::array<double, 7> s) {
  return ExpressionDistribution::make(s, false);
}

}  // namespace

TEST_CASE("rnn_step") {
  SUBCASE("zero cell: zero state, uniform output") {
    RnnCell cell = zero_cell(16);
    auto r = rnn_step(cell, one_hot(ExpressionClass::kHappy), RnnState::initial(16));
    for (std::size_t i = 0; i < r.state.s.numel(); ++i) CHECK(r.state.s[i] == 0.0);
    for (double v : r.output.scores) CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    CHECK(r.state.t == 1);
  }
  SUBCASE("identity input weights pass x_t through the clamp") {
    RnnCell cell = zero_cell(7);
    for (int i = 0; i < 7; ++i) cell.u[static_cast<std::size_t>(i * 7 + i)] = 1.0;
    ExpressionDistribution x = soft_vector({0.1, 0.5, 0.05, 0.05, 0.1, 0.15, 0.05});
    auto r = rnn_step(cell, x, RnnState::initial(7));
    for (int i = 0; i < 7; ++i) {
      CHECK(r.state.s[static_cast<std::size_t>(i)] == x.scores[static_cast<std::size_t>(i)]);
    }
  }
  SUBCASE("two-step unroll matches a hand-computed oracle") {
    RnnCell cell = zero_cell(2);
    // u: 7x2 with u[1][0]=0.6, u[5][1]=0.4; w = [[0.5, -0.25], [0.1, 0.3]];
    // v: 2x7 with v[0][1]=1.0, v[1][5]=0.8; b_f = (0.05, -0.02); b_o = 0.
    cell.u[static_cast<std::size_t>(1 * 2 + 0)] = 0.6;
    cell.u[static_cast<std::size_t>(5 * 2 + 1)] = 0.4;
    cell.w = Tensor({2, 2}, std::vector<double>{0.5, -0.25, 0.1, 0.3});
    cell.v[static_cast<std::size_t>(0 * 7 + 1)] = 1.0;
    cell.v[static_cast<std::size_t>(1 * 7 + 5)] = 0.8;
    cell.b_f = tensor1({0.05, -0.02});

    ExpressionDistribution x1 = soft_vector({0.0, 0.9, 0.0, 0.0, 0.0, 0.1, 0.0});
    ExpressionDistribution x2 = soft_vector({0.0, 0.2, 0.0, 0.0, 0.0, 0.8, 0.0});

    // step 1: pre = x.U + 0.W + b_f
    const double s1a = 0.9 * 0.6 + 0.05;        // 0.59
    const double s1b = 0.1 * 0.4 - 0.02;        // 0.02
    // step 2: pre = x2.U + s1.W + b_f
    const double s2a = 0.2 * 0.6 + (s1a * 0.5 + s1b * 0.1) + 0.05;
    const double s2b = 0.8 * 0.4 + (s1a * -0.25 + s1b * 0.3) - 0.02;
    // logits = s2.V; softmax over 7 with only indices 1 and 5 nonzero
    std::array<double, 7> logits{};
    logits[1] = s2a * 1.0;
    logits[5] = s2b * 0.8;
    double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    std::array<double, 7> expect{};
    for (int i = 0; i < 7; ++i) denom += std::exp(logits[static_cast<std::size_t>(i)] - mx);
    for (int i = 0; i < 7; ++i) {
      expect[static_cast<std::size_t>(i)] = std::exp(logits[static_cast<std::size_t>(i)] - mx) / denom;
    }

    auto r1 = rnn_step(cell, x1, RnnState::initial(2));
    CHECK(std::abs(r1.state.s[0] - s1a) <= 1e-12);
    CHECK(std::abs(r1.state.s[1] - s1b) <= 1e-12);
    auto r2 = rnn_step(cell, x2, r1.state);
    CHECK(std::abs(r2.state.s[0] - s2a) <= 1e-12);
    CHECK(std::abs(r2.state.s[1] - s2b) <= 1e-12);
    for (int i = 0; i < 7; ++i) {
      CHECK(std::abs(r2.output.scores[static_cast<std::size_t>(i)] -
                     expect[static_cast<std::size_t>(i)]) <= 1e-12);
    }
  }
  SUBCASE("dimension mismatch") {
    RnnCell cell = zero_cell(4);
    RnnState wrong = RnnState::initial(5);
    CHECK_THROWS_AS(rnn_step(cell, one_hot(ExpressionClass::kAnger), wrong), DimensionError);
  }
  SUBCASE("hidden state stays within the clamp range for random cells") {
    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
      RnnCell cell = build_cell(8, rng.next_u64());
      for (std::size_t i = 0; i < cell.w.numel(); ++i) cell.w[i] *= 10.0;  // push saturation
      RnnState st = RnnState::initial(8);
      for (int step = 0; step < 5; ++step) {
        Tensor logits = selfcheck::random_tensor(rng, {7}, -2.0, 2.0);
        auto x = ExpressionDistribution::from_tensor(
            activate(ActivationKind::SOFTMAX_STANDARD, logits), true);
        auto r = rnn_step(cell, x, st);
        st = r.state;
        for (std::size_t i = 0; i < st.s.numel(); ++i) {
          CHECK(st.s[i] >= -1.0);
          CHECK(st.s[i] <= 1.0);
        }
      }
    }
  }
  SUBCASE("zero recurrent weights make the output history-free") {
    Rng rng(13);
    RnnCell cell = build_cell(6, 99);
    cell.w.fill(0.0);
    ExpressionDistribution x = one_hot(ExpressionClass::kFear);
    RnnState fresh = RnnState::initial(6);
    RnnState history = fresh;
    for (int i = 0; i < 4; ++i) {
      Tensor logits = selfcheck::random_tensor(rng, {7}, -1.0, 1.0);
      history = rnn_step(cell, ExpressionDistribution::from_tensor(
                                   activate(ActivationKind::SOFTMAX_STANDARD, logits), true),
                         history)
                    .state;
    }
    auto a = rnn_step(cell, x, fresh);
    auto b = rnn_step(cell, x, history);
    for (int c = 0; c < 7; ++c) {
      CHECK(a.output.scores[static_cast<std::size_t>(c)] ==
            b.output.scores[static_cast<std::size_t>(c)]);
    }
  }
}

TEST_CASE("predict_next") {
  SUBCASE("zero maps give the zero vector") {
    NextStatePredictor p = NextStatePredictor::zero();
    Tensor y = predict_next(p, one_hot(ExpressionClass::kSleep));
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0);
  }
  SUBCASE("f = g = identity saturates 0.9 + 0.9 to 1") {
    NextStatePredictor p = NextStatePredictor::zero();
    for (int i = 0; i < 7; ++i) {
      p.w_f[static_cast<std::size_t>(i * 7 + i)] = 1.0;
      p.w_g[static_cast<std::size_t>(i * 7 + i)] = 1.0;
    }
    std::array<double, 7> s{};
    s.fill(0.9);
    Tensor y = predict_next(p, soft_vector(s));
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 1.0);
  }
  SUBCASE("seeded affine maps match the direct oracle") {
    NextStatePredictor p = NextStatePredictor::seeded(55);
    Rng rng(56);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor logits = selfcheck::random_tensor(rng, {7}, -1.0, 1.0);
      auto x = ExpressionDistribution::from_tensor(
          activate(ActivationKind::SOFTMAX_STANDARD, logits), true);
      Tensor got = predict_next(p, x);
      for (int j = 0; j < 7; ++j) {
        double acc = p.c_f[static_cast<std::size_t>(j)] + p.c_g[static_cast<std::size_t>(j)];
        for (int i = 0; i < 7; ++i) {
          acc += x.scores[static_cast<std::size_t>(i)] *
                 (p.w_f[static_cast<std::size_t>(i * 7 + j)] +
                  p.w_g[static_cast<std::size_t>(i * 7 + j)]);
        }
        acc = std::clamp(acc, -1.0, 1.0);
        CHECK(std::abs(got[static_cast<std::size_t>(j)] - acc) <= 1e-12);
      }
    }
  }
  SUBCASE("saturated components ignore perturbations") {
    NextStatePredictor p = NextStatePredictor::zero();
    for (int i = 0; i < 7; ++i) {
      p.w_f[static_cast<std::size_t>(i * 7 + i)] = 2.0;
      p.w_g[static_cast<std::size_t>(i * 7 + i)] = 2.0;
    }
    std::array<double, 7> hi{};
    hi.fill(0.9);
    std::array<double, 7> hi2{};
    hi2.fill(1.0);
    Tensor a = predict_next(p, soft_vector(hi));
    Tensor b = predict_next(p, soft_vector(hi2));
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(a[i] == 1.0);
      CHECK(b[i] == 1.0);
    }
  }
}

TEST_CASE("train_rnn") {
  SUBCASE("memorizes the disgust -> neutral -> happy cycle") {
    std::vector<ExpressionDistribution> series;
    const ExpressionClass cycle[3] = {ExpressionClass::kDisgust, ExpressionClass::kNeutral,
                                      ExpressionClass::kHappy};
    for (int i = 0; i < 31; ++i) series.push_back(one_hot(cycle[i % 3]));
    RnnCell cell = build_cell(16, 7);
    TrainConfig tc;
    tc.epochs = 200;
    tc.learning_rate = 0.05;
    tc.seed = 7;
    train_rnn(cell, {series}, tc);
    CHECK(rnn_next_step_accuracy(cell, {series}) >= 0.95);
  }
  SUBCASE("constant sequence converges to the constant class") {
    std::vector<ExpressionDistribution> series(12, one_hot(ExpressionClass::kNeutral));
    RnnCell cell = build_cell(16, 3);
    TrainConfig tc;
    tc.epochs = 60;
    tc.learning_rate = 0.05;
    train_rnn(cell, {series}, tc);
    RnnState st = RnnState::initial(16);
    auto r = rnn_step(cell, one_hot(ExpressionClass::kNeutral), st);
    CHECK(dominant(r.output) == ExpressionClass::kNeutral);
  }
  SUBCASE("same seed trains identical cells bitwise") {
    std::vector<ExpressionDistribution> series;
    for (int i = 0; i < 10; ++i) {
      series.push_back(one_hot(static_cast<ExpressionClass>(i % 7)));
    }
    TrainConfig tc;
    tc.epochs = 20;
    RnnCell a = build_cell(8, 42);
    RnnCell b = build_cell(8, 42);
    train_rnn(a, {series}, tc);
    train_rnn(b, {series}, tc);
    for (std::size_t i = 0; i < a.u.numel(); ++i) CHECK(a.u[i] == b.u[i]);
    for (std::size_t i = 0; i < a.w.numel(); ++i) CHECK(a.w[i] == b.w[i]);
    for (std::size_t i = 0; i < a.v.numel(); ++i) CHECK(a.v[i] == b.v[i]);
  }
  SUBCASE("sequences shorter than 2 error") {
    RnnCell cell = build_cell(4, 1);
    TrainConfig tc;
    std::vector<ExpressionDistribution> tiny = {one_hot(ExpressionClass::kAnger)};
    CHECK_THROWS_WITH_AS(train_rnn(cell, {tiny}, tc), doctest::Contains("length >= 2"), Error);
    CHECK_THROWS_AS(train_rnn(cell, {}, tc), Error);
  }
}

TEST_CASE("rnn cell gradients pass the finite-difference check") {
  auto res = gradcheck::check_rnn(8, 4, 77);
  CHECK_MESSAGE(res.pass, res.name, " max rel err=", res.max_rel_error);
}

TEST_CASE("build_timeline") {
  SUBCASE("single frame window is that frame's distribution") {
    auto d = soft_vector({0.1, 0.2, 0.1, 0.2, 0.1, 0.2, 0.1});
    auto tl = build_timeline_from_distributions({{d}}, {0.0});
    REQUIRE(tl.entries.size() == 1);
    for (int c = 0; c < 7; ++c) {
      CHECK(tl.entries[0].dist.scores[static_cast<std::size_t>(c)] ==
            d.scores[static_cast<std::size_t>(c)]);
    }
  }
  SUBCASE("mean of identical frames is exact (idempotent)") {
    auto d = soft_vector({0.15, 0.25, 0.05, 0.2, 0.1, 0.15, 0.1});
    auto one = build_timeline_from_distributions({{d}}, {0.0});
    for (int copies : {2, 3, 7}) {
      std::vector<ExpressionDistribution> w(static_cast<std::size_t>(copies), d);
      auto many = build_timeline_from_distributions({w}, {0.0});
      for (int c = 0; c < 7; ++c) {
        CHECK(many.entries[0].dist.scores[static_cast<std::size_t>(c)] ==
              one.entries[0].dist.scores[static_cast<std::size_t>(c)]);
      }
    }
  }
  SUBCASE("Table 2 fixture reproduces row-for-row") {
    auto tl = fixtures::table2_timeline(3);
    REQUIRE(tl.entries.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(tl.entries[k].timestamp == fixtures::kTable2Times[k]);
      for (int c = 0; c < 7; ++c) {
        CHECK(std::abs(tl.entries[k].dist.scores[static_cast<std::size_t>(c)] -
                       fixtures::kTable2[k][static_cast<std::size_t>(c)]) <= 1e-12);
      }
    }
  }
  SUBCASE("empty window names its slot") {
    auto d = soft_vector({0.1, 0.2, 0.1, 0.2, 0.1, 0.2, 0.1});
    CHECK_THROWS_WITH_AS(build_timeline_from_distributions({{d}, {}}, {0.0, 10.0}),
                         doctest::Contains("t+10s"), Error);
  }
  SUBCASE("a cell appends its one-step prediction") {
    RnnCell cell = zero_cell(4);
    auto tl = fixtures::table2_timeline(1);
    auto with = build_timeline_from_distributions(
        {{tl.entries[0].dist}, {tl.entries[1].dist}}, {0.0, 10.0}, 10.0, &cell);
    REQUIRE(with.predicted_next.has_value());
    for (double v : with.predicted_next->scores) {
      CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("detect_shift") {
  SUBCASE("Table 2: disgust hands over to neutral at t+10s") {
    auto report = detect_shift(fixtures::table2_timeline());
    REQUIRE(report.dominants.size() == 4);
    CHECK(report.dominants[0] == ExpressionClass::kDisgust);
    CHECK(report.dominants[1] == ExpressionClass::kNeutral);
    CHECK(report.dominants[2] == ExpressionClass::kNeutral);
    CHECK(report.dominants[3] == ExpressionClass::kNeutral);
    REQUIRE(report.transitions.size() == 1);
    CHECK(report.transitions[0].from == ExpressionClass::kDisgust);
    CHECK(report.transitions[0].to == ExpressionClass::kNeutral);
    CHECK(report.transitions[0].at == 10.0);
  }
  SUBCASE("Table 2 deltas: neutral +0.05520, disgust -0.092759") {
    auto report = detect_shift(fixtures::table2_timeline());
    CHECK(std::abs(report.deltas[static_cast<std::size_t>(ExpressionClass::kNeutral)] -
                   0.05520) <= 1e-12);
    CHECK(std::abs(report.deltas[static_cast<std::size_t>(ExpressionClass::kDisgust)] -
                   (-0.092759)) <= 1e-12);
  }
  SUBCASE("constant timeline: no transitions, zero deltas") {
    auto d = soft_vector({0.1, 0.2, 0.1, 0.2, 0.1, 0.2, 0.1});
    auto tl = build_timeline_from_distributions({{d}, {d}, {d}}, {0.0, 10.0, 20.0});
    auto report = detect_shift(tl);
    CHECK(report.transitions.empty());
    for (double v : report.deltas) CHECK(v == 0.0);
  }
  SUBCASE("transition list is invariant under positive rescaling") {
    auto tl = fixtures::table2_timeline();
    for (double k : {0.5, 2.0, 3.3}) {
      EmotionTimeline scaled = tl;
      for (auto& e : scaled.entries) {
        for (double& v : e.dist.scores) v *= k;
        e.dist.normalized = false;
      }
      auto a = detect_shift(tl);
      auto b = detect_shift(scaled);
      REQUIRE(a.transitions.size() == b.transitions.size());
      for (std::size_t i = 0; i < a.transitions.size(); ++i) {
        CHECK(a.transitions[i].from == b.transitions[i].from);
        CHECK(a.transitions[i].to == b.transitions[i].to);
        CHECK(a.transitions[i].at == b.transitions[i].at);
      }
    }
  }
  SUBCASE("needs two entries") {
    auto d = soft_vector({0.1, 0.2, 0.1, 0.2, 0.1, 0.2, 0.1});
    auto tl = build_timeline_from_distributions({{d}}, {0.0});
    CHECK_THROWS_AS(detect_shift(tl), Error);
  }
}

TEST_CASE("smoothness") {
  SUBCASE("constant timeline scores zero") {
    auto d = soft_vector({0.1, 0.2, 0.1, 0.2, 0.1, 0.2, 0.1});
    auto tl = build_timeline_from_distributions({{d}, {d}}, {0.0, 10.0});
    CHECK(smoothness(tl) == 0);
  }
  SUBCASE("Table 2 scores one: neutral was second-highest before taking over") {
    CHECK(smoothness(fixtures::table2_timeline()) == 1);
  }
  SUBCASE("a jump from the rank-5 class scores four") {
    // first window ordering: anger > disgust > fear > happy > sadness > ...
    auto w1 = soft_vector({0.30, 0.25, 0.15, 0.12, 0.08, 0.06, 0.04});
    // sadness (rank index 4 in w1) becomes dominant
    auto w2 = soft_vector({0.10, 0.10, 0.10, 0.10, 0.40, 0.10, 0.10});
    auto tl = build_timeline_from_distributions({{w1}, {w2}}, {0.0, 10.0});
    CHECK(smoothness(tl) == 4);
  }
}
