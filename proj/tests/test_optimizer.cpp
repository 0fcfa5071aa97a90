// tests/test_optimizer.cpp

#include <doctest.h>

#include "eda/optimizer.hpp"
#include "oracles.hpp"

using namespace eda::ad;
using oracle::DMat;

TEST_CASE("two Adam steps by hand") {
  AdamConfig c;
  c.d_model = 4;
  c.warmup_steps = 1;
  c.base_lr = 0.2;
  Parameter<double> p("w", DMat::Constant(1, 1, 1.0));
  Adam<double> opt(c, {&p});

  // lr(1) = 0.2 / 2 * min(1, 1) = 0.1; m = 0.1 g, v = 0.02 g^2 -> step = lr * g / |g|.
  p.grad = DMat::Constant(1, 1, 0.5);
  CHECK(opt.step() == doctest::Approx(0.1));
  const double w1 = 1.0 - 0.1 * 0.5 / (0.5 + 1e-9);
  CHECK(p.value(0, 0) == doctest::Approx(w1).epsilon(1e-12));

  // lr(2) = 0.1 / sqrt(2); g = -1.
  p.grad = DMat::Constant(1, 1, -1.0);
  const double m = 0.9 * 0.05 + 0.1 * -1.0;
  const double v = 0.98 * 0.02 * 0.25 + 0.02 * 1.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.98 * 0.98);
  const double lr2 = 0.1 / std::sqrt(2.0);
  opt.step();
  CHECK(p.value(0, 0) == doctest::Approx(w1 - lr2 * mh / (std::sqrt(vh) + 1e-9)).epsilon(1e-12));
  CHECK(opt.state().step == 2);
}

TEST_CASE("a zero gradient leaves fresh parameters unchanged") {
  Parameter<double> p("w", DMat::Constant(2, 3, 0.7));
  Adam<double> opt(AdamConfig{}, {&p});
  opt.zero_grad();
  opt.step();
  CHECK((p.value.array() == 0.7).all());
}

TEST_CASE("warm-up schedule peaks at the warm-up step") {
  AdamConfig c;
  c.warmup_steps = 100;
  c.d_model = 64;
  const double peak = warmup_lr(100, c);
  CHECK(peak == doctest::Approx(1.0 / 8.0 / 10.0));
  for (std::int64_t s = 1; s < 100; ++s) CHECK(warmup_lr(s, c) < warmup_lr(s + 1, c));
  for (std::int64_t s = 100; s < 300; ++s) CHECK(warmup_lr(s, c) > warmup_lr(s + 1, c));
  CHECK(warmup_lr(50, c) == doctest::Approx(peak * 0.5));
  CHECK(kPaperWarmupSteps == 100000);
}

TEST_CASE("gradient clipping rescales to the joint norm") {
  Parameter<double> a("a", DMat::Zero(1, 2)), b("b", DMat::Zero(1, 1));
  a.grad = DMat(1, 2);
  a.grad << 3.0, 0.0;
  b.grad = DMat::Constant(1, 1, 4.0);
  CHECK(clip_grad_norm<double>({&a, &b}, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad(0, 0) == doctest::Approx(0.6));
  CHECK(b.grad(0, 0) == doctest::Approx(0.8));
  CHECK(clip_grad_norm<double>({&a, &b}, 10.0) == doctest::Approx(1.0));
  CHECK(a.grad(0, 0) == doctest::Approx(0.6));
}
