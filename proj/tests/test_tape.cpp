#include <cmath>

#include "doctest.h"
#include "fer/oracle.hpp"
#include "fer/selfcheck.hpp"
#include "fer/tape.hpp"

using namespace fer;

namespace {

// FD of a scalar-valued tape program wrt one leaf.
Tensor fd_wrt(const std::function<double(const Tensor&)>& f, const Tensor& x) {
  return oracle::finite_difference(f, x, 1e-5);
}

}  // namespace

TEST_CASE("tape contract") {
  SUBCASE("backward on an empty tape errors") {
    GradTape t;
    CHECK_THROWS_AS(t.backward(0), Error);
  }
  SUBCASE("non-scalar root needs an upstream gradient") {
    GradTape t;
    int x = t.leaf(tensor1({1.0, 2.0}));
    CHECK_THROWS_AS(t.backward(x), DimensionError);
    CHECK_NOTHROW(t.backward(x, tensor1({1.0, 0.0})));
  }
  SUBCASE("unused parameters receive zero gradients") {
    GradTape t;
    int x = t.leaf(tensor1({1.0, 2.0, 3.0}));
    int unused = t.leaf(Tensor({4, 4}, 0.5));
    int s = tape::sum(t, x);
    t.backward(s);
    const Tensor& gu = t.grad(unused);
    CHECK(gu.same_shape(t.value(unused)));
    for (std::size_t i = 0; i < gu.numel(); ++i) CHECK(gu[i] == 0.0);
  }
  SUBCASE("loss = sum(dense(x, I, b)) gives all-ones gradient wrt x") {
    GradTape t;
    int x = t.leaf(tensor1({0.3, -0.2, 0.9}));
    Tensor eye({3, 3}, 0.0);
    for (int i = 0; i < 3; ++i) eye[static_cast<std::size_t>(i * 3 + i)] = 1.0;
    int w = t.leaf(eye);
    int b = t.leaf(Tensor({3}, 0.0));
    int y = tape::dense(t, x, w, b);
    int s = tape::sum(t, y);
    t.backward(s);
    for (std::size_t i = 0; i < 3; ++i) CHECK(t.grad(x)[i] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("sigmoid_eq1 subgradient is zero at x <= 0") {
    GradTape t;
    int x = t.leaf(tensor1({-0.7, -0.0, 1.2}));
    int y = tape::activation(t, ActivationKind::SIGMOID_EQ1, x);
    int s = tape::sum(t, y);
    t.backward(s);
    CHECK(t.grad(x)[0] == 0.0);
    CHECK(t.grad(x)[1] == 0.0);
    CHECK(t.grad(x)[2] > 0.0);
  }
}

TEST_CASE("per-op gradients match central finite differences") {
  Rng rng(31);
  const double tol = 1e-4;

  SUBCASE("dense") {
    Tensor x = selfcheck::random_tensor(rng, {5});
    Tensor w = selfcheck::random_tensor(rng, {5, 4});
    Tensor b = selfcheck::random_tensor(rng, {4});
    auto loss = [&](const Tensor& xx, const Tensor& ww, const Tensor& bb) {
      GradTape t;
      int xi = t.leaf(xx), wi = t.leaf(ww), bi = t.leaf(bb);
      int s = tape::sum(t, tape::activation(t, ActivationKind::SIGMOID_STANDARD,
                                            tape::dense(t, xi, wi, bi)));
      return t.value(s)[0];
    };
    GradTape t;
    int xi = t.leaf(x), wi = t.leaf(w), bi = t.leaf(b);
    int s = tape::sum(
        t, tape::activation(t, ActivationKind::SIGMOID_STANDARD, tape::dense(t, xi, wi, bi)));
    t.backward(s);
    CHECK(oracle::max_gradient_rel_error(
              t.grad(xi), fd_wrt([&](const Tensor& v) { return loss(v, w, b); }, x)) < tol);
    CHECK(oracle::max_gradient_rel_error(
              t.grad(wi), fd_wrt([&](const Tensor& v) { return loss(x, v, b); }, w)) < tol);
    CHECK(oracle::max_gradient_rel_error(
              t.grad(bi), fd_wrt([&](const Tensor& v) { return loss(x, w, v); }, b)) < tol);
  }

  SUBCASE("conv2d + pool") {
    Tensor x = selfcheck::random_tensor(rng, {6, 6, 2});
    Tensor k = selfcheck::random_tensor(rng, {3, 3, 2, 3});
    auto loss = [&](const Tensor& xx, const Tensor& kk) {
      GradTape t;
      int xi = t.leaf(xx), ki = t.leaf(kk);
      int c = tape::conv2d(t, xi, ki, 1, Padding::kValid);
      int p = tape::max_pool2d(t, c);
      int a = tape::activation(t, ActivationKind::SIGMOID_STANDARD, p);
      return t.value(tape::sum(t, a))[0];
    };
    GradTape t;
    int xi = t.leaf(x), ki = t.leaf(k);
    int c = tape::conv2d(t, xi, ki, 1, Padding::kValid);
    int p = tape::max_pool2d(t, c);
    int a = tape::activation(t, ActivationKind::SIGMOID_STANDARD, p);
    t.backward(tape::sum(t, a));
    CHECK(oracle::max_gradient_rel_error(
              t.grad(xi), fd_wrt([&](const Tensor& v) { return loss(v, k); }, x)) < tol);
    CHECK(oracle::max_gradient_rel_error(
              t.grad(ki), fd_wrt([&](const Tensor& v) { return loss(x, v); }, k)) < tol);
  }

  SUBCASE("batch_norm (train statistics)") {
    Tensor x = selfcheck::random_tensor(rng, {6, 3}, -2.0, 2.0);
    Tensor gamma = selfcheck::random_tensor(rng, {3}, 0.5, 1.5);
    Tensor beta = selfcheck::random_tensor(rng, {3}, -0.5, 0.5);
    auto loss = [&](const Tensor& xx, const Tensor& gg, const Tensor& bb) {
      GradTape t;
      int xi = t.leaf(xx), gi = t.leaf(gg), bi = t.leaf(bb);
      int y = tape::batch_norm(t, xi, gi, bi);
      int a = tape::activation(t, ActivationKind::SIGMOID_STANDARD, y);
      return t.value(tape::sum(t, a))[0];
    };
    GradTape t;
    int xi = t.leaf(x), gi = t.leaf(gamma), bi = t.leaf(beta);
    int y = tape::batch_norm(t, xi, gi, bi);
    int a = tape::activation(t, ActivationKind::SIGMOID_STANDARD, y);
    t.backward(tape::sum(t, a));
    CHECK(oracle::max_gradient_rel_error(
              t.grad(xi), fd_wrt([&](const Tensor& v) { return loss(v, gamma, beta); }, x)) < tol);
    CHECK(oracle::max_gradient_rel_error(
              t.grad(gi), fd_wrt([&](const Tensor& v) { return loss(x, v, beta); }, gamma)) < tol);
    CHECK(oracle::max_gradient_rel_error(
              t.grad(bi), fd_wrt([&](const Tensor& v) { return loss(x, gamma, v); }, beta)) < tol);
  }

  SUBCASE("scalar sum through each activation kind") {
    for (ActivationKind kind :
         {ActivationKind::SIGMOID_EQ1, ActivationKind::SIGMOID_STANDARD,
          ActivationKind::HARD_CLAMP_EQ8, ActivationKind::IDENTITY,
          ActivationKind::SOFTMAX_STANDARD, ActivationKind::SOFTMAX_EQ6_LITERAL}) {
      // Stay away from the piecewise kinks so FD is valid.
      Tensor x = tensor1({0.8, -0.6, 0.3, -0.2, 0.5});
      auto loss = [&](const Tensor& xx) {
        GradTape t;
        int xi = t.leaf(xx);
        int a = tape::activation(t, kind, xi);
        return t.value(tape::sum(t, a))[0];
      };
      GradTape t;
      int xi = t.leaf(x);
      int a = tape::activation(t, kind, xi);
      t.backward(tape::sum(t, a));
      CHECK_MESSAGE(oracle::max_gradient_rel_error(t.grad(xi), fd_wrt(loss, x)) < tol,
                    "activation kind ", activation_name(kind));
    }
  }

  SUBCASE("softmax cross-entropy fused loss") {
    Tensor z = tensor1({0.4, -1.2, 0.9, 0.1});
    auto loss = [&](const Tensor& zz) {
      GradTape t;
      int zi = t.leaf(zz);
      return t.value(tape::softmax_xent(t, zi, 2))[0];
    };
    GradTape t;
    int zi = t.leaf(z);
    t.backward(tape::softmax_xent(t, zi, 2));
    CHECK(oracle::max_gradient_rel_error(t.grad(zi), fd_wrt(loss, z)) < tol);
  }

  SUBCASE("concat routes both halves") {
    Tensor a = tensor1({0.2, -0.4});
    Tensor b = tensor1({1.0, 0.5, -0.3});
    auto loss = [&](const Tensor& aa, const Tensor& bb) {
      GradTape t;
      int ai = t.leaf(aa), bi = t.leaf(bb);
      int c = tape::concat(t, ai, bi);
      int s = tape::activation(t, ActivationKind::SOFTMAX_STANDARD, c);
      return t.value(tape::softmax_xent(t, s, 0))[0];
    };
    GradTape t;
    int ai = t.leaf(a), bi = t.leaf(b);
    int c = tape::concat(t, ai, bi);
    int s = tape::activation(t, ActivationKind::SOFTMAX_STANDARD, c);
    t.backward(tape::softmax_xent(t, s, 0));
    CHECK(oracle::max_gradient_rel_error(
              t.grad(ai), fd_wrt([&](const Tensor& v) { return loss(v, b); }, a)) < tol);
    CHECK(oracle::max_gradient_rel_error(
              t.grad(bi), fd_wrt([&](const Tensor& v) { return loss(a, v); }, b)) < tol);
  }
}

TEST_CASE("composed conv -> bn -> pool -> dense network passes FD") {
  Rng rng(57);
  Tensor x = selfcheck::random_tensor(rng, {6, 6, 1});
  Tensor k = selfcheck::random_tensor(rng, {3, 3, 1, 2}, -0.5, 0.5);
  Tensor gamma = selfcheck::random_tensor(rng, {2}, 0.5, 1.5);
  Tensor beta = selfcheck::random_tensor(rng, {2}, -0.2, 0.2);
  Tensor w = selfcheck::random_tensor(rng, {8, 3}, -0.5, 0.5);
  Tensor b = selfcheck::random_tensor(rng, {3}, -0.2, 0.2);

  auto build = [&](GradTape& t, const Tensor& kk, const Tensor& gg, const Tensor& bb,
                   const Tensor& ww, const Tensor& dd) {
    int xi = t.leaf(x);
    int ki = t.leaf(kk), gi = t.leaf(gg), bi = t.leaf(bb), wi = t.leaf(ww), di = t.leaf(dd);
    int c = tape::conv2d(t, xi, ki, 1, Padding::kValid);
    int n = tape::batch_norm(t, c, gi, bi);
    int p = tape::max_pool2d(t, n);
    int fl = tape::flatten(t, p);
    int d = tape::dense(t, fl, wi, di);
    return tape::softmax_xent(t, d, 1);
  };

  GradTape t;
  {
    int loss = build(t, k, gamma, beta, w, b);
    t.backward(loss);
  }
  struct Probe {
    const Tensor* base;
    int leaf_index;  // order in build(): k=1, gamma=2, beta=3, w=4, b=5 (x=0)
  };
  const Probe probes[] = {{&k, 1}, {&gamma, 2}, {&beta, 3}, {&w, 4}, {&b, 5}};
  for (const Probe& p : probes) {
    Tensor fd = oracle::finite_difference(
        [&](const Tensor& v) {
          GradTape t2;
          const Tensor& kk = p.base == &k ? v : k;
          const Tensor& gg = p.base == &gamma ? v : gamma;
          const Tensor& bb = p.base == &beta ? v : beta;
          const Tensor& ww = p.base == &w ? v : w;
          const Tensor& dd = p.base == &b ? v : b;
          return t2.value(build(t2, kk, gg, bb, ww, dd))[0];
        },
        *p.base, 1e-5);
    CHECK(oracle::max_gradient_rel_error(t.grad(p.leaf_index), fd) < 1e-4);
  }
}
