// tests/test_model.cpp

#include <doctest.h>

#include "eda/errors.hpp"
#include "eda/model.hpp"
#include "model_fd.hpp"
#include "oracles.hpp"

using namespace eda::model;
using FMat = eda::ad::Matrix<float>;

namespace {

ModelConfig small(int input_dim = 7) {
  ModelConfig c = ModelConfig::toy();
  c.encoder.input_dim = input_dim;
  return c;
}

}  // namespace

TEST_CASE("presets") {
  CHECK(ModelConfig::full().encoder.n_blocks == 4);
  CHECK(ModelConfig::full().encoder.d_model == 256);
  CHECK(ModelConfig::toy().encoder.n_blocks == 2);
  CHECK(ModelConfig::toy().encoder.d_model == 64);
  ModelConfig bad = ModelConfig::toy();
  bad.encoder.n_heads = 3;
  CHECK_THROWS_AS(bad.validate(), eda::ConfigInvalid);
  CHECK(ModelConfig::from_meta(small().to_meta()) == small());
  CHECK(small().hash() != ModelConfig::toy().hash());
}

TEST_CASE("forward shapes") {
  EendEda<float> m(small(), 1);
  std::mt19937_64 rng(1);
  const FMat f = oracle::random_matrix(rng, 13, 7).cast<float>();
  eda::ad::Tape<float> t;
  auto e = m.encode(t, f);
  CHECK(e.rows() == 13);
  CHECK(e.cols() == 64);
  auto out = m.eda(t, e, {}, 4);
  CHECK(out.attractors.rows() == 4);
  CHECK(out.attractors.cols() == 64);
  CHECK(out.existence_logits.rows() == 4);
  CHECK(out.existence_logits.cols() == 1);
  auto p = EendEda<float>::posterior_logits(e, out.attractors);
  CHECK(p.rows() == 13);
  CHECK(p.cols() == 4);
  CHECK_THROWS_AS(m.encode(t, FMat::Zero(3, 6)), eda::ShapeError);
  const std::vector<eda::ad::Index> short_order{0, 1};
  CHECK_THROWS_AS(m.eda(t, e, short_order, 2), eda::ShapeError);
}

TEST_CASE("all-zero parameters give probability one half everywhere") {
  EendEda<float> m(small(), 2);
  for (auto *p : m.parameters()) p->value.setZero();
  std::mt19937_64 rng(2);
  eda::ad::Tape<float> t;
  auto e = m.encode(t, oracle::random_matrix(rng, 9, 7).cast<float>());
  auto out = m.eda(t, e, {}, 3);
  auto logits = EendEda<float>::posterior_logits(e, out.attractors);
  CHECK(logits.value().cwiseAbs().maxCoeff() == 0.0f);
  CHECK(out.existence_logits.value().cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("attractors depend on the encoder input order, deterministically") {
  EendEda<float> m(small(), 3);
  std::mt19937_64 rng(3);
  const FMat f = oracle::random_matrix(rng, 20, 7).cast<float>();
  const auto order = shuffled_order(20, 5);
  CHECK(order == shuffled_order(20, 5));
  CHECK(order != shuffled_order(20, 6));
  auto attractors = [&](std::span<const eda::ad::Index> o) {
    eda::ad::Tape<float> t;
    auto e = m.encode(t, f);
    return FMat(m.eda(t, e, o, 3).attractors.value());
  };
  CHECK(attractors(order) == attractors(order));
  CHECK(attractors(order) != attractors({}));
  std::vector<eda::ad::Index> id(20);
  std::iota(id.begin(), id.end(), 0);
  CHECK(attractors(id) == attractors({}));
}

TEST_CASE("embeddings are permutation-equivariant without positions") {
  EendEda<double> m(small(), 4);
  std::mt19937_64 rng(4);
  const oracle::DMat f = oracle::random_matrix(rng, 10, 7);
  const auto order = shuffled_order(10, 9);
  oracle::DMat g(10, 7);
  for (int i = 0; i < 10; ++i) g.row(i) = f.row(order[static_cast<std::size_t>(i)]);
  eda::ad::Tape<double> t;
  const oracle::DMat ef = m.encode(t, f).value(), eg = m.encode(t, g).value();
  for (int i = 0; i < 10; ++i)
    CHECK((eg.row(i) - ef.row(order[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("checkpoint round trip is bit-identical") {
  const std::string dir = oracle::tmp_dir("model_ckpt");
  EendEda<float> m(small(), 5);
  m.note_trained_speakers(3);
  save_model(dir + "/m.ckpt", m, {{"note", "x"}});
  EendEda<float> r = load_model(dir + "/m.ckpt");
  CHECK(r.config() == m.config());
  CHECK(r.trained_speakers() == 3);
  std::mt19937_64 rng(5);
  const FMat f = oracle::random_matrix(rng, 11, 7).cast<float>();
  auto run = [&](EendEda<float> &mm) {
    eda::ad::Tape<float> t;
    auto e = mm.encode(t, f);
    auto out = mm.eda(t, e, {}, 3);
    return FMat(EendEda<float>::posterior_logits(e, out.attractors).value());
  };
  CHECK(run(m) == run(r));

  eda::io::Archive a = eda::io::read_archive(dir + "/m.ckpt");
  a.tensors.pop_back();
  EendEda<float> other(small(), 6);
  CHECK_THROWS_AS(other.import_tensors(a), eda::CheckpointIncompatible);
}

TEST_CASE("composed graph matches finite differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) CHECK(oracle::composed_grad_check(seed) < 1e-3);
}
