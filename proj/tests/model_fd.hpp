// tests/model_fd.hpp
//
// Finite-difference check of the composed graph
// features -> encode -> eda -> posteriors -> training loss, over every
// model parameter.

#ifndef EDA_TESTS_MODEL_FD_HPP_
#define EDA_TESTS_MODEL_FD_HPP_

#include "eda/model.hpp"
#include "eda/objective.hpp"
#include "oracles.hpp"

namespace oracle {

inline eda::model::ModelConfig tiny_model_config() {
  eda::model::ModelConfig c;
  c.encoder.n_blocks = 1;
  c.encoder.d_model = 8;
  c.encoder.n_heads = 2;
  c.encoder.d_ff = 16;
  c.encoder.input_dim = 5;
  return c;
}

// Returns the worst norm-wise relative error over all parameter tensors.
// The step is smaller than for single ops: with many relu units a 1e-5
// step occasionally straddles a kink, which shows up as an error that
// scales linearly with h.
inline double composed_grad_check(std::uint64_t seed, double h = 1e-6) {
  using namespace eda;
  std::mt19937_64 rng(seed);
  model::EendEda<double> m(tiny_model_config(), seed + 1);
  const ad::Index T = 6;
  const int S = 1 + static_cast<int>(seed % 3);
  const DMat feats = random_matrix(rng, T, 5);
  DMat labels(T, S);
  std::bernoulli_distribution b(0.5);
  for (ad::Index i = 0; i < labels.size(); ++i) labels.data()[i] = b(rng) ? 1.0 : 0.0;
  const std::vector<ad::Index> order = model::shuffled_order(T, seed);

  auto forward = [&](bool backward) {
    ad::Tape<double> tape;
    auto e = m.encode(tape, feats);
    auto out = m.eda(tape, e, order, S + 1);
    auto logits = model::EendEda<double>::posterior_logits(e, ad::slice_rows(out.attractors, 0, S));
    auto loss = objective::eda_loss(logits, out.existence_logits, labels, 1.0);
    if (backward) tape.backward(loss.total);
    return loss.total.value()(0, 0);
  };

  for (auto *p : m.parameters()) p->zero_grad();
  forward(true);
  double worst = 0.0;
  for (auto *p : m.parameters()) {
    DMat numeric(p->value.rows(), p->value.cols());
    for (ad::Index k = 0; k < p->value.size(); ++k) {
      const double orig = p->value.data()[k];
      p->value.data()[k] = orig + h;
      const double fp = forward(false);
      p->value.data()[k] = orig - h;
      const double fm = forward(false);
      p->value.data()[k] = orig;
      numeric.data()[k] = (fp - fm) / (2.0 * h);
    }
    DMat analytic = p->grad.size() ? p->grad : DMat::Zero(p->value.rows(), p->value.cols());
    worst = std::max(worst, rel_error(analytic, numeric, kGradFloor));
  }
  return worst;
}

}  // namespace oracle

#endif  // EDA_TESTS_MODEL_FD_HPP_
