// src/infer.cpp

#include "eda/infer.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include <Eigen/Eigenvalues>

#include "eda/errors.hpp"

namespace eda::infer {

Probe Probe::parse(const std::string &s) {
  Probe p;
  if (s.empty() || s == "none") return p;
  const auto colon = s.find(':');
  if (colon == std::string::npos)
    throw ConfigInvalid("probe must be none, subsample:N or last:N, got '" + s + "'");
  const std::string kind = s.substr(0, colon);
  if (kind == "subsample") {
    p.kind = Kind::kSubsample;
  } else if (kind == "last") {
    p.kind = Kind::kLast;
  } else {
    throw ConfigInvalid("unknown probe '" + kind + "'");
  }
  try {
    std::size_t used = 0;
    p.n = std::stoi(s.substr(colon + 1), &used);
    if (used != s.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception &) {
    throw ConfigInvalid("probe factor must be an integer in '" + s + "'");
  }
  if (p.n < 1) throw ConfigInvalid("probe factor must be >= 1");
  return p;
}

std::string Probe::to_string() const {
  switch (kind) {
    case Kind::kNone: return "none";
    case Kind::kSubsample: return "subsample:" + std::to_string(n);
    case Kind::kLast: return "last:" + std::to_string(n);
  }
  return "none";
}

void InferConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigInvalid("tau must be in (0, 1)");
  if (!(activity_threshold > 0.0 && activity_threshold < 1.0))
    throw ConfigInvalid("activity_threshold must be in (0, 1)");
  if (median_filter_frames < 1 || median_filter_frames % 2 == 0)
    throw ConfigInvalid("median_filter_frames must be a positive odd number");
  if (max_attractors < 0) throw ConfigInvalid("max_attractors must be >= 0 (0: auto)");
  if (oracle_speakers && *oracle_speakers < 0)
    throw ConfigInvalid("oracle speaker count must be >= 0");
  if (probe.n < 1) throw ConfigInvalid("probe factor must be >= 1");
}

int InferConfig::decode_steps(int trained_speakers) const {
  if (max_attractors > 0) return max_attractors;
  return trained_speakers > 0 ? trained_speakers + 1 : kFallbackAttractors;
}

int estimate_speaker_count(std::span<const double> p, double tau) {
  int count = 0;
  for (std::size_t s = 0; s < p.size(); ++s)
    if (p[s] >= tau) count = static_cast<int>(s) + 1;
  return count;
}

PosteriorMatrix posteriors(const DMatrix &attractors, const DMatrix &embeddings,
                           double frame_period_s) {
  if (attractors.rows() == 0)
    throw EmptyDiarization("no speakers: posterior matrix would be empty");
  if (attractors.cols() != embeddings.cols())
    throw ShapeError("posteriors: attractor and embedding widths differ");
  PosteriorMatrix y;
  y.frame_period_s = frame_period_s;
  y.probs = (attractors * embeddings.transpose())
                .unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
  return y;
}

std::vector<double> median_filter(std::span<const double> x, int width) {
  if (width < 1 || width % 2 == 0) throw ConfigInvalid("median width must be odd");
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t h = width / 2;
  std::vector<double> out(x.size()), win(static_cast<std::size_t>(width));
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    for (std::ptrdiff_t k = -h; k <= h; ++k)
      win[static_cast<std::size_t>(k + h)] = x[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i + k, 0, n - 1))];
    std::nth_element(win.begin(), win.begin() + h, win.end());
    out[static_cast<std::size_t>(i)] = win[static_cast<std::size_t>(h)];
  }
  return out;
}

Binarized binarize(const PosteriorMatrix &y, const InferConfig &cfg,
                   const std::string &recording_id) {
  const ad::Index S = y.probs.rows(), T = y.probs.cols();
  Binarized b;
  b.labels.frame_period_s = y.frame_period_s;
  b.labels.activity = ad::Matrix<float>::Zero(T, S);
  for (ad::Index s = 0; s < S; ++s) {
    b.labels.speaker_ids.push_back("spk" + std::to_string(s));
    std::vector<double> row(static_cast<std::size_t>(T));
    for (ad::Index t = 0; t < T; ++t) row[static_cast<std::size_t>(t)] = y.probs(s, t);
    const std::vector<double> f = median_filter(row, cfg.median_filter_frames);
    for (ad::Index t = 0; t < T; ++t)
      if (f[static_cast<std::size_t>(t)] >= cfg.activity_threshold) b.labels.activity(t, s) = 1.0f;
  }
  b.segments = sim::labels_to_rttm(b.labels, recording_id);
  return b;
}

std::vector<ad::Index> probe_rows(ad::Index T, const Probe &probe) {
  std::vector<ad::Index> rows;
  switch (probe.kind) {
    case Probe::Kind::kNone:
      rows.resize(static_cast<std::size_t>(T));
      std::iota(rows.begin(), rows.end(), ad::Index{0});
      break;
    case Probe::Kind::kSubsample:
      for (ad::Index t = 0; t < T; t += probe.n) rows.push_back(t);
      break;
    case Probe::Kind::kLast: {
      const ad::Index keep = (T + probe.n - 1) / probe.n;
      for (ad::Index t = T - keep; t < T; ++t) rows.push_back(t);
      break;
    }
  }
  if (rows.empty()) throw InputEmpty("probe " + probe.to_string() + " leaves no frames");
  return rows;
}

DMatrix probe_transform(const DMatrix &embeddings, const Probe &probe) {
  const std::vector<ad::Index> rows = probe_rows(embeddings.rows(), probe);
  DMatrix out(static_cast<ad::Index>(rows.size()), embeddings.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<ad::Index>(i)) = embeddings.row(rows[i]);
  return out;
}

Projection project2d(const DMatrix &embeddings, const DMatrix &attractors) {
  const ad::Index T = embeddings.rows(), D = embeddings.cols();
  if (T < 2) throw InputEmpty("project2d needs at least two embeddings");
  if (D < 1) throw ShapeError("project2d: zero-width embeddings");
  if (attractors.rows() > 0 && attractors.cols() != D)
    throw ShapeError("project2d: attractor width differs from embeddings");
  Projection p;
  p.mean = embeddings.colwise().mean();
  const Eigen::MatrixXd centred = embeddings.rowwise() - p.mean;
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(T - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  // Eigenvalues come back ascending.
  p.basis = DMatrix::Zero(D, 2);
  p.explained_variance.setZero();
  for (int k = 0; k < 2 && k < D; ++k) {
    Eigen::VectorXd v = es.eigenvectors().col(D - 1 - k);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    p.basis.col(k) = v;
    p.explained_variance(k) = std::max(0.0, es.eigenvalues()(D - 1 - k));
  }
  p.embeddings = centred * p.basis;
  if (attractors.rows() > 0)
    p.attractors = (attractors.rowwise() - p.mean) * p.basis;
  else
    p.attractors = DMatrix(0, 2);
  return p;
}

void write_projection_csv(const std::string &path, const Projection &p,
                          const std::vector<bool> &silence_frames) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(9);
  out << "x,y,kind,index\n";
  for (ad::Index t = 0; t < p.embeddings.rows(); ++t) {
    const bool sil = static_cast<std::size_t>(t) < silence_frames.size() &&
                     silence_frames[static_cast<std::size_t>(t)];
    out << p.embeddings(t, 0) << ',' << p.embeddings(t, 1) << ','
        << (sil ? "silence-frame" : "embedding") << ',' << t << '\n';
  }
  for (ad::Index s = 0; s < p.attractors.rows(); ++s)
    out << p.attractors(s, 0) << ',' << p.attractors(s, 1) << ",attractor," << s << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ad::Index> eda_input_order(ad::Index n, const InferConfig &cfg) {
  if (cfg.order == model::OrderMode::kChronological) return {};
  return model::shuffled_order(n, cfg.seed);
}

Result diarize(model::EendEda<float> &m, const feat::FloatMatrix &features,
               const InferConfig &cfg, const std::string &recording_id,
               double frame_period_s) {
  cfg.validate();
  if (features.rows() < 1) throw InputEmpty("no feature frames for " + recording_id);
  ad::Tape<float> tape;
  tape.set_track_grad(false);
  auto E = m.encode(tape, features);

  // The probe only affects what the attractor encoder sees.
  auto eda_in = E;
  if (cfg.probe.kind != Probe::Kind::kNone) {
    eda_in = ad::gather_rows(E, probe_rows(E.rows(), cfg.probe));
  }
  const std::vector<ad::Index> order = eda_input_order(eda_in.rows(), cfg);
  const int n_decode = std::max(cfg.decode_steps(m.trained_speakers()), cfg.oracle_speakers.value_or(0));
  auto out = m.eda(tape, eda_in, order, n_decode);

  Result r;
  r.embeddings = E.value().cast<double>();
  r.attractors = out.attractors.value().cast<double>();
  r.existence.resize(static_cast<std::size_t>(n_decode));
  for (int s = 0; s < n_decode; ++s)
    r.existence[static_cast<std::size_t>(s)] =
        1.0 / (1.0 + std::exp(-static_cast<double>(out.existence_logits.value()(s, 0))));
  r.estimated_speakers = estimate_speaker_count(r.existence, cfg.tau);
  r.used_speakers = cfg.oracle_speakers.value_or(r.estimated_speakers);
  r.output.labels.frame_period_s = frame_period_s;
  if (r.used_speakers == 0) {
    r.posterior.frame_period_s = frame_period_s;
    r.posterior.probs = DMatrix(0, r.embeddings.rows());
    r.output.labels.activity = ad::Matrix<float>::Zero(r.embeddings.rows(), 0);
    return r;
  }
  r.posterior = posteriors(r.attractors.topRows(r.used_speakers), r.embeddings, frame_period_s);
  r.output = binarize(r.posterior, cfg, recording_id);
  return r;
}

CorpusEvaluation evaluate_manifest(model::EendEda<float> &m, const std::string &manifest_path,
                                   const InferConfig &cfg, bool oracle_from_reference,
                                   const score::ScoreOptions &sopts, bool with_jer, int jobs) {
  namespace fs = std::filesystem;
  const std::vector<sim::ManifestRecord> recs = sim::read_manifest(manifest_path);
  if (recs.empty()) throw IoError("manifest " + manifest_path + " lists no recordings");
  const fs::path dir = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string &p) {
    return fs::path(p).is_absolute() ? p : (dir / p).string();
  };

  const std::size_t n = recs.size();
  std::vector<std::vector<score::RttmSegment>> hyp(n), ref(n);
  CorpusEvaluation ev;
  ev.estimated_counts.assign(n, 0);
  ev.reference_counts.assign(n, 0);
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr err;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        const sim::ManifestRecord &r = recs[i];
        const feat::FeatureSequence f = feat::read_features(resolve(r.features));
        InferConfig c = cfg;
        if (oracle_from_reference) c.oracle_speakers = r.n_speakers;
        const Result res = diarize(m, f.frames, c, r.id, f.frame_period_s);
        hyp[i] = res.output.segments;
        ref[i] = score::read_rttm(resolve(r.rttm));
        ev.estimated_counts[i] = res.estimated_speakers;
        ev.reference_counts[i] = r.n_speakers;
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  const int j = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (j == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < j; ++k) pool.emplace_back(work);
    for (std::thread &t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);

  std::vector<score::RttmSegment> all_ref;
  int correct = 0;
  double jer_sum = 0.0;
  int jer_n = 0;
  for (std::size_t i = 0; i < n; ++i) {
    all_ref.insert(all_ref.end(), ref[i].begin(), ref[i].end());
    ev.hypothesis.insert(ev.hypothesis.end(), hyp[i].begin(), hyp[i].end());
    if (ev.estimated_counts[i] == ev.reference_counts[i]) ++correct;
    if (with_jer && !ref[i].empty()) {
      jer_sum += score::jer(ref[i], hyp[i], sopts.max_exhaustive_speakers);
      ++jer_n;
    }
  }
  ev.count_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  if (with_jer && jer_n > 0) ev.jer = jer_sum / jer_n;
  ev.report = score::der(all_ref, ev.hypothesis, sopts);
  ev.report.jer = ev.jer;
  return ev;
}

}  // namespace eda::infer
