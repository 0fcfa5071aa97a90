// tests/test_infer.cpp

#include <doctest.h>

#include "eda/errors.hpp"
#include "eda/infer.hpp"
#include "oracles.hpp"

using namespace eda::infer;
using oracle::DMat;

TEST_CASE("speaker count uses the largest qualifying index") {
  CHECK(estimate_speaker_count(std::vector<double>{0.9, 0.8, 0.1}, 0.5) == 2);
  CHECK(estimate_speaker_count(std::vector<double>{0.9, 0.3, 0.6, 0.2}, 0.5) == 3);
  CHECK(estimate_speaker_count(std::vector<double>{0.2, 0.1}, 0.5) == 0);
  CHECK(estimate_speaker_count(std::vector<double>{0.5}, 0.5) == 1);
}

TEST_CASE("speaker count matches a backward scan and is non-increasing in tau") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<double> p(static_cast<std::size_t>(1 + rep % 8));
    for (double &v : p) v = u(rng);
    const double tau = u(rng);
    CHECK(estimate_speaker_count(p, tau) == oracle::count_scan(p, tau));
    int prev = std::numeric_limits<int>::max();
    for (double t = 0.01; t < 1.0; t += 0.07) {
      const int c = estimate_speaker_count(p, t);
      CHECK(c <= prev);
      prev = c;
    }
  }
}

TEST_CASE("posteriors") {
  const PosteriorMatrix z = posteriors(DMat::Zero(2, 3), DMat::Ones(4, 3));
  CHECK(z.probs.rows() == 2);
  CHECK(z.probs.cols() == 4);
  CHECK((z.probs.array() == 0.5).all());
  const PosteriorMatrix one = posteriors(DMat::Constant(1, 1, 1.0), DMat::Constant(1, 1, 2.0));
  CHECK(one.probs(0, 0) == doctest::Approx(0.8807970779778823).epsilon(1e-12));
  CHECK_THROWS_AS(posteriors(DMat(0, 3), DMat::Ones(4, 3)), eda::EmptyDiarization);

  std::mt19937_64 rng(2);
  const DMat a = oracle::random_matrix(rng, 2, 4), e = oracle::random_matrix(rng, 3, 4);
  const PosteriorMatrix p = posteriors(a, e);
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 3; ++t) {
      double dot = 0.0;
      for (int d = 0; d < 4; ++d) dot += a(s, d) * e(t, d);
      CHECK(p.probs(s, t) == doctest::Approx(1.0 / (1.0 + std::exp(-dot))).epsilon(1e-12));
      CHECK(p.probs(s, t) > 0.0);
      CHECK(p.probs(s, t) < 1.0);
    }
}

TEST_CASE("median filter replicates edges") {
  const std::vector<double> x{0, 1, 0, 0, 1, 1, 1};
  CHECK(median_filter(x, 1) == x);
  CHECK(median_filter(x, 3) == std::vector<double>{0, 0, 0, 0, 1, 1, 1});
  CHECK_THROWS_AS(median_filter(x, 2), eda::ConfigInvalid);
}

namespace {

struct Run {
  int speaker;
  int begin;
  int end;
};

// Per-frame scan for maximal runs at or above the threshold.
std::vector<Run> scan_runs(const DMat &p, double thr) {
  std::vector<Run> runs;
  for (int s = 0; s < p.rows(); ++s) {
    int start = -1;
    for (int t = 0; t <= p.cols(); ++t) {
      const bool on = t < p.cols() && p(s, t) >= thr;
      if (on && start < 0) start = t;
      if (!on && start >= 0) {
        runs.push_back({s, start, t});
        start = -1;
      }
    }
  }
  return runs;
}

}  // namespace

TEST_CASE("binarize") {
  InferConfig cfg;
  cfg.median_filter_frames = 1;
  PosteriorMatrix all;
  all.probs = DMat::Constant(2, 7, 0.9);
  const Binarized b = binarize(all, cfg, "rec");
  REQUIRE(b.segments.size() == 2);
  for (const auto &s : b.segments) {
    CHECK(s.onset_s == 0.0);
    CHECK(s.duration_s == doctest::Approx(0.7));
    CHECK(s.recording_id == "rec");
  }

  PosteriorMatrix single;
  single.probs = DMat::Constant(1, 5, 0.1);
  single.probs(0, 3) = 0.8;
  const Binarized one = binarize(single, cfg, "rec");
  REQUIRE(one.segments.size() == 1);
  CHECK(one.segments[0].onset_s == doctest::Approx(0.3));
  CHECK(one.segments[0].duration_s == doctest::Approx(0.1));
  CHECK(one.segments[0].speaker_id == "spk0");

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    PosteriorMatrix p;
    p.frame_period_s = 0.1;
    p.probs = DMat(3, 40);
    for (eda::ad::Index i = 0; i < p.probs.size(); ++i) p.probs.data()[i] = u(rng);
    const Binarized r = binarize(p, cfg, "x");
    std::vector<Run> runs = scan_runs(p.probs, cfg.activity_threshold);
    REQUIRE(r.segments.size() == runs.size());
    std::sort(runs.begin(), runs.end(), [](const Run &a, const Run &b) {
      return std::tie(a.begin, a.speaker) < std::tie(b.begin, b.speaker);
    });
    for (std::size_t k = 0; k < runs.size(); ++k) {
      const auto &s = r.segments[k];
      CHECK(s.speaker_id == "spk" + std::to_string(runs[k].speaker));
      // Boundaries sit on the frame grid.
      CHECK(std::abs(s.onset_s - runs[k].begin * 0.1) <= 1e-9);
      CHECK(std::abs(s.offset_s() - runs[k].end * 0.1) <= 1e-9);
    }
  }
}

TEST_CASE("probe rows") {
  CHECK(probe_rows(10, Probe::parse("subsample:1")) == probe_rows(10, Probe{}));
  CHECK(probe_rows(10, Probe::parse("last:1")) == probe_rows(10, Probe{}));
  CHECK(probe_rows(10, Probe::parse("subsample:2")) == std::vector<eda::ad::Index>{0, 2, 4, 6, 8});
  CHECK(probe_rows(10, Probe::parse("last:4")) == std::vector<eda::ad::Index>{7, 8, 9});
  CHECK(Probe::parse("last:4").to_string() == "last:4");
  CHECK_THROWS_AS(Probe::parse("last:0"), eda::ConfigInvalid);
  CHECK_THROWS_AS(Probe::parse("middle:2"), eda::ConfigInvalid);
  CHECK_THROWS_AS(probe_rows(0, Probe::parse("last:2")), eda::InputEmpty);
  std::mt19937_64 rng(4);
  const DMat e = oracle::random_matrix(rng, 10, 3);
  CHECK(probe_transform(e, Probe::parse("subsample:1")) == e);
}

TEST_CASE("project2d agrees with a Jacobi eigendecomposition") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const DMat e = oracle::random_matrix(rng, 5, 3);
    const DMat a = oracle::random_matrix(rng, 2, 3);
    const Projection p = project2d(e, a);
    const Eigen::RowVectorXd mean = e.colwise().mean();
    const DMat c = e.rowwise() - mean;
    const DMat cov = c.transpose() * c / static_cast<double>(e.rows() - 1);
    Eigen::VectorXd vals;
    DMat vecs;
    oracle::jacobi_eigen(cov, vals, vecs);
    CHECK(p.explained_variance(0) >= p.explained_variance(1));
    for (int k = 0; k < 2; ++k) {
      CHECK(p.explained_variance(k) == doctest::Approx(vals(k)).epsilon(1e-9));
      const double align = std::abs(p.basis.col(k).dot(vecs.col(k)));
      CHECK(align == doctest::Approx(1.0).epsilon(1e-9));
      const DMat proj = c * p.basis.col(k);
      CHECK(oracle::rel_error(proj, p.embeddings.col(k)) < 1e-12);
      const DMat ap = (a.rowwise() - mean) * p.basis.col(k);
      CHECK(oracle::rel_error(ap, p.attractors.col(k)) < 1e-12);
    }
  }
}

TEST_CASE("project2d reconstructs planar data exactly") {
  std::mt19937_64 rng(6);
  const DMat coeff = oracle::random_matrix(rng, 8, 2), plane = oracle::random_matrix(rng, 2, 5);
  const DMat e = (coeff * plane).rowwise() + oracle::random_matrix(rng, 1, 5).row(0);
  const Projection p = project2d(e, DMat(0, 5));
  const DMat recon = (p.embeddings * p.basis.transpose()).rowwise() + p.mean;
  CHECK((recon - e).cwiseAbs().maxCoeff() <= 1e-8);
  const Projection flat = project2d(DMat::Ones(4, 3), DMat(0, 3));
  CHECK(flat.explained_variance(1) == doctest::Approx(0.0));
  CHECK_THROWS(project2d(DMat::Ones(1, 3), DMat(0, 3)));
}

TEST_CASE("diarize: oracle count equals the matching estimated count") {
  eda::model::ModelConfig mc = eda::model::ModelConfig::toy();
  mc.encoder.input_dim = 6;
  eda::model::EendEda<float> m(mc, 11);
  std::mt19937_64 rng(7);
  const eda::feat::FloatMatrix f = oracle::random_matrix(rng, 30, 6).cast<float>();
  InferConfig cfg;
  cfg.seed = 3;
  const Result est = diarize(m, f, cfg, "r");
  CHECK(est.existence.size() == static_cast<std::size_t>(kFallbackAttractors));
  for (int s : {1, 2, 3}) {
    InferConfig oc = cfg;
    oc.oracle_speakers = s;
    const Result o = diarize(m, f, oc, "r");
    CHECK(o.used_speakers == s);
    CHECK(o.posterior.num_speakers() == s);
    CHECK(o.estimated_speakers == est.estimated_speakers);
    if (s == est.estimated_speakers) CHECK(o.output.segments == est.output.segments);
  }
  InferConfig ps = cfg;
  ps.probe = Probe::parse("subsample:1");
  CHECK(diarize(m, f, ps, "r").output.segments == est.output.segments);
}

TEST_CASE("infer config validation") {
  InferConfig c;
  c.tau = 1.0;
  CHECK_THROWS_AS(c.validate(), eda::ConfigInvalid);
  c.tau = 0.5;
  c.median_filter_frames = 4;
  CHECK_THROWS_AS(c.validate(), eda::ConfigInvalid);
  c.median_filter_frames = 11;
  c.max_attractors = -1;
  CHECK_THROWS_AS(c.validate(), eda::ConfigInvalid);
}

TEST_CASE("auto attractor count follows the trained speaker count") {
  InferConfig c;
  CHECK(c.decode_steps(0) == kFallbackAttractors);
  CHECK(c.decode_steps(3) == 4);
  c.max_attractors = 7;
  CHECK(c.decode_steps(3) == 7);

  eda::model::ModelConfig mc = eda::model::ModelConfig::toy();
  mc.encoder.input_dim = 6;
  eda::model::EendEda<float> m(mc, 11);
  m.note_trained_speakers(2);
  m.note_trained_speakers(1);
  CHECK(m.trained_speakers() == 2);
  std::mt19937_64 rng(8);
  const eda::feat::FloatMatrix f = oracle::random_matrix(rng, 20, 6).cast<float>();
  InferConfig a;
  CHECK(diarize(m, f, a, "r").existence.size() == 3);
  a.oracle_speakers = 5;
  CHECK(diarize(m, f, a, "r").existence.size() == 5);
}
