// tests/test_diffcore.cpp

#include <doctest.h>

#include "eda/diffcore.hpp"
#include "eda/errors.hpp"
#include "gradcases.hpp"
#include "oracles.hpp"

using namespace eda::ad;
using oracle::DMat;

TEST_CASE("sigmoid at zero") {
  Tape<double> t;
  auto x = t.variable(DMat::Zero(1, 1));
  auto y = sigmoid(x);
  CHECK(y.value()(0, 0) == doctest::Approx(0.5));
  t.backward(y);
  CHECK(x.grad()(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("layer_norm of a constant row is zero before the affine") {
  Tape<double> t;
  auto x = t.variable(DMat::Constant(2, 5, 3.25));
  auto y = layer_norm(x, t.constant(DMat::Ones(1, 5)), t.constant(DMat::Zero(1, 5)));
  CHECK(y.value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softmax rows sum to one; layer_norm rows are standardised") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    Tape<double> t;
    auto x = t.variable(oracle::random_matrix(rng, 4, 9, 3.0));
    auto s = softmax_rows(x);
    for (Index r = 0; r < 4; ++r) CHECK(std::abs(s.value().row(r).sum() - 1.0) < 1e-6);
    auto n = layer_norm(x, t.constant(DMat::Ones(1, 9)), t.constant(DMat::Zero(1, 9)));
    for (Index r = 0; r < 4; ++r) {
      const double mean = n.value().row(r).mean();
      const double var = (n.value().row(r).array() - mean).square().mean();
      CHECK(std::abs(mean) <= 1e-6);
      CHECK(std::abs(var - 1.0) <= 1e-4);
    }
  }
}

TEST_CASE("every op matches central finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto &c : gradcases::make_cases(seed)) {
      const double err = oracle::grad_check(c.build, c.inputs, seed * 7919 + 1);
      INFO(c.name << " seed " << seed);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("lstm with zero parameters and state stays at zero") {
  Tape<double> t;
  const Index d = 4;
  LstmState<double> prev{t.constant(DMat::Zero(1, d)), t.constant(DMat::Zero(1, d))};
  auto st = lstm_cell(t.constant(DMat::Zero(1, d)), prev, t.constant(DMat::Zero(d, 4 * d)),
                      t.constant(DMat::Zero(d, 4 * d)), t.constant(DMat::Zero(1, 4 * d)));
  CHECK(st.h.value().cwiseAbs().maxCoeff() == 0.0);
  CHECK(st.c.value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("saturated forget gate keeps the previous cell") {
  std::mt19937_64 rng(3);
  const Index d = 5;
  Tape<double> t;
  DMat x = oracle::random_matrix(rng, 1, d), h = oracle::random_matrix(rng, 1, d);
  DMat c = oracle::random_matrix(rng, 1, d);
  DMat wih = oracle::random_matrix(rng, d, 4 * d, 0.3), whh = oracle::random_matrix(rng, d, 4 * d, 0.3);
  DMat b = oracle::random_matrix(rng, 1, 4 * d, 0.3);
  b.block(0, d, 1, d).setConstant(20.0);
  auto st = lstm_cell(t.constant(x), LstmState<double>{t.constant(h), t.constant(c)},
                      t.constant(wih), t.constant(whh), t.constant(b));
  const DMat gates = x * wih + h * whh + b;
  for (Index j = 0; j < d; ++j) {
    const double i = 1.0 / (1.0 + std::exp(-gates(0, j)));
    const double g = std::tanh(gates(0, 2 * d + j));
    CHECK(std::abs(st.c.value()(0, j) - (c(0, j) + i * g)) < 1e-6);
  }
}

TEST_CASE("backward of a sum of losses is the sum of backwards") {
  std::mt19937_64 rng(11);
  const DMat a = oracle::random_matrix(rng, 3, 4), w = oracle::random_matrix(rng, 4, 2);
  auto run = [&](int which) {
    Tape<double> t;
    auto x = t.variable(a);
    auto y = matmul(x, t.constant(w));
    auto l1 = sum(sigmoid(y));
    auto l2 = sum(mul(y, y));
    t.backward(which == 0 ? l1 : which == 1 ? l2 : add(l1, l2));
    return DMat(x.grad());
  };
  CHECK(oracle::rel_error(run(0) + run(1), run(2)) < 1e-14);
}

TEST_CASE("gradient accumulates across repeated uses") {
  Tape<double> t;
  auto x = t.variable(DMat::Constant(1, 1, 3.0));
  t.backward(mul(x, x));
  CHECK(x.grad()(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("parameters receive gradients through the tape") {
  Parameter<double> p("w", DMat::Constant(2, 2, 0.5));
  Tape<double> t;
  auto w = t.parameter(p);
  t.backward(sum(matmul(t.constant(DMat::Ones(1, 2)), w)));
  CHECK(p.grad.rows() == 2);
  CHECK(p.grad.sum() == doctest::Approx(4.0));
}

TEST_CASE("shape mismatches raise ShapeError") {
  Tape<double> t;
  auto a = t.variable(DMat::Zero(2, 3));
  auto b = t.variable(DMat::Zero(2, 2));
  CHECK_THROWS_AS(matmul(a, b), eda::ShapeError);
  CHECK_THROWS_AS(add(a, b), eda::ShapeError);
  CHECK_THROWS_AS(mul(a, b), eda::ShapeError);
  CHECK_THROWS_AS(slice_rows(a, 1, 2), eda::ShapeError);
  CHECK_THROWS_AS(t.backward(a), eda::ShapeError);
  CHECK_THROWS_AS(lstm_cell(t.variable(DMat::Zero(1, 3)),
                            LstmState<double>{t.constant(DMat::Zero(1, 2)), t.constant(DMat::Zero(1, 2))},
                            t.constant(DMat::Zero(2, 8)), t.constant(DMat::Zero(2, 8)),
                            t.constant(DMat::Zero(1, 8))),
                  eda::ShapeError);
}

TEST_CASE("untracked tapes skip gradient bookkeeping") {
  Parameter<double> p("w", DMat::Ones(2, 2));
  Tape<double> t;
  t.set_track_grad(false);
  auto w = t.parameter(p);
  auto y = sum(matmul(t.constant(DMat::Ones(1, 2)), w));
  t.backward(y);
  CHECK(p.grad.size() == 0);
}
