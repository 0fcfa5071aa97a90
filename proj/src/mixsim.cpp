// src/mixsim.cpp

#include "eda/mixsim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "eda/errors.hpp"
#include "eda/tensor_io.hpp"

namespace eda::sim {

namespace fs = std::filesystem;

namespace {

constexpr double kMinUtteranceS = 0.5;
constexpr double kMaxUtteranceS = 10.0;
constexpr int kRenderBlock = 512;
constexpr double kSourceRms = 0.1;

std::string speaker_name(int pool_index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "spk%02d", pool_index);
  return buf;
}

SpeakerProfile random_profile(std::mt19937_64 &rng, int base_dim,
                              const std::string &id) {
  std::uniform_real_distribution<double> centre(0.0, base_dim - 1.0);
  std::uniform_real_distribution<double> width(1.0, 2.5);
  std::uniform_real_distribution<double> height(0.5, 1.0);
  std::uniform_real_distribution<double> gain(-3.0, 3.0);
  SpeakerProfile p;
  p.id = id;
  p.envelope.assign(static_cast<std::size_t>(base_dim), 0.01);
  for (int bump = 0; bump < 2; ++bump) {
    const double c = centre(rng), w = width(rng), h = height(rng);
    for (int i = 0; i < base_dim; ++i) {
      const double z = (i - c) / w;
      p.envelope[static_cast<std::size_t>(i)] += h * std::exp(-0.5 * z * z);
    }
  }
  p.gain_db = gain(rng);
  return p;
}

double envelope_correlation(const std::vector<double> &a,
                            const std::vector<double> &b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 1.0;
  return sab / std::sqrt(saa * sbb);
}

double draw_length(std::mt19937_64 &rng, const MixtureSpec &spec) {
  std::lognormal_distribution<double> d(std::log(spec.utterance_median_s),
                                        spec.utterance_sigma);
  return std::clamp(d(rng), kMinUtteranceS, kMaxUtteranceS);
}

// Magnitude response on the rfft grid of the render block, interpolated
// linearly in Mel between filter centres.
std::vector<double> block_response(const SpeakerProfile &p,
                                   const feat::FrontendConfig &fe) {
  feat::FrontendConfig cfg = fe;
  cfg.n_mels = static_cast<int>(p.envelope.size());
  const std::vector<double> centres_hz = feat::mel_center_frequencies(cfg);
  std::vector<double> centres(centres_hz.size());
  for (std::size_t i = 0; i < centres.size(); ++i) centres[i] = feat::hz_to_mel(centres_hz[i]);

  const int n_bins = kRenderBlock / 2 + 1;
  std::vector<double> h(static_cast<std::size_t>(n_bins));
  for (int k = 0; k < n_bins; ++k) {
    const double m = feat::hz_to_mel(k * static_cast<double>(fe.sample_rate_hz) / kRenderBlock);
    double e;
    if (m <= centres.front()) {
      e = p.envelope.front();
    } else if (m >= centres.back()) {
      e = p.envelope.back();
    } else {
      const auto it = std::upper_bound(centres.begin(), centres.end(), m);
      const std::size_t j = static_cast<std::size_t>(it - centres.begin());
      const double w = (m - centres[j - 1]) / (centres[j] - centres[j - 1]);
      e = (1.0 - w) * p.envelope[j - 1] + w * p.envelope[j];
    }
    h[static_cast<std::size_t>(k)] = std::sqrt(std::max(e, 0.0));
  }
  return h;
}

// White noise filtered by the speaker response with sine-windowed 50%
// overlap-add (analysis * synthesis windows sum to one), scaled to the
// profile's RMS.
std::vector<double> render_source(const SpeakerProfile &p, std::size_t n,
                                  const feat::FrontendConfig &fe,
                                  std::mt19937_64 &rng) {
  const std::vector<double> h = block_response(p, fe);
  const int hop = kRenderBlock / 2;
  std::vector<double> win(kRenderBlock);
  for (int i = 0; i < kRenderBlock; ++i)
    win[static_cast<std::size_t>(i)] = std::sin(M_PI * (i + 0.5) / kRenderBlock);

  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t padded = n + 2 * kRenderBlock;
  std::vector<double> white(padded);
  for (double &v : white) v = gauss(rng);

  std::vector<double> out(padded, 0.0);
  std::vector<std::complex<double>> buf(kRenderBlock);
  for (std::size_t start = 0; start + kRenderBlock <= padded; start += hop) {
    for (int i = 0; i < kRenderBlock; ++i)
      buf[static_cast<std::size_t>(i)] = white[start + static_cast<std::size_t>(i)] * win[static_cast<std::size_t>(i)];
    feat::fft(buf, false);
    for (int k = 0; k < kRenderBlock; ++k) {
      const int kk = k <= kRenderBlock / 2 ? k : kRenderBlock - k;
      buf[static_cast<std::size_t>(k)] *= h[static_cast<std::size_t>(kk)];
    }
    feat::fft(buf, true);
    for (int i = 0; i < kRenderBlock; ++i)
      out[start + static_cast<std::size_t>(i)] +=
          buf[static_cast<std::size_t>(i)].real() * win[static_cast<std::size_t>(i)];
  }
  std::vector<double> src(out.begin() + kRenderBlock, out.begin() + kRenderBlock + static_cast<std::ptrdiff_t>(n));
  double power = 0.0;
  for (double v : src) power += v * v;
  power /= std::max<std::size_t>(n, 1);
  const double target = kSourceRms * std::pow(10.0, p.gain_db / 20.0);
  const double k = power > 0.0 ? target / std::sqrt(power) : 0.0;
  for (double &v : src) v *= k;
  return src;
}

double frame_centre_s(int t, const feat::FrontendConfig &fe) {
  const double base = static_cast<double>(t) * fe.subsample * fe.hop_samples();
  return (base + fe.window_samples() / 2.0) / fe.sample_rate_hz;
}

std::vector<int> speakers_active_at(const std::vector<Utterance> &utts, double t0,
                                    double t1) {
  std::vector<int> out;
  for (const Utterance &u : utts)
    if (u.onset_s < t1 && u.offset_s > t0) out.push_back(u.speaker);
  return out;
}

std::vector<SpeakerProfile> pick_speakers(const MixtureSpec &spec,
                                          std::mt19937_64 &rng,
                                          int base_dim) {
  if (spec.speaker_pool_size <= 0) {
    std::vector<SpeakerProfile> fresh;
    for (int i = 0; i < spec.n_speakers; ++i)
      fresh.push_back(random_profile(rng, base_dim, speaker_name(i)));
    return fresh;
  }
  std::vector<SpeakerProfile> pool =
      make_speaker_pool(spec.speaker_pool_size, spec.pool_seed, base_dim);
  std::vector<int> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<SpeakerProfile> chosen;
  for (int i = 0; i < spec.n_speakers; ++i) {
    std::uniform_int_distribution<std::size_t> d(static_cast<std::size_t>(i), idx.size() - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[d(rng)]);
    chosen.push_back(pool[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
  }
  return chosen;
}

std::size_t num_samples(const MixtureSpec &spec, const feat::FrontendConfig &fe) {
  return static_cast<std::size_t>(std::llround(spec.duration_s * fe.sample_rate_hz));
}

// Drops speakers without any active label frame and re-indexes the rest.
void compact_speakers(std::vector<Utterance> &utts,
                      std::vector<SpeakerProfile> &speakers, LabelMatrix &labels) {
  std::vector<int> remap(speakers.size(), -1);
  std::vector<SpeakerProfile> kept;
  std::vector<ad::Index> cols;
  for (std::size_t s = 0; s < speakers.size(); ++s) {
    if (labels.activity.col(static_cast<ad::Index>(s)).sum() > 0.0f) {
      remap[s] = static_cast<int>(kept.size());
      kept.push_back(speakers[s]);
      cols.push_back(static_cast<ad::Index>(s));
    }
  }
  if (kept.size() == speakers.size()) return;
  ad::Matrix<float> act(labels.activity.rows(), static_cast<ad::Index>(cols.size()));
  std::vector<std::string> ids;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    act.col(static_cast<ad::Index>(j)) = labels.activity.col(cols[j]);
    ids.push_back(labels.speaker_ids[static_cast<std::size_t>(cols[j])]);
  }
  labels.activity = std::move(act);
  labels.speaker_ids = std::move(ids);
  std::vector<Utterance> u2;
  for (Utterance u : utts) {
    if (remap[static_cast<std::size_t>(u.speaker)] < 0) continue;
    u.speaker = remap[static_cast<std::size_t>(u.speaker)];
    u2.push_back(u);
  }
  utts = std::move(u2);
  speakers = std::move(kept);
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void MixtureSpec::validate() const {
  if (n_speakers < 1) throw ConfigInvalid("n_speakers must be >= 1");
  if (!(duration_s > 0.0)) throw ConfigInvalid("duration_s must be > 0");
  if (!(target_overlap_ratio >= 0.0 && target_overlap_ratio < 1.0))
    throw ConfigInvalid("target_overlap_ratio must be in [0, 1)");
  if (!(silence_gap_mean_s > 0.0)) throw ConfigInvalid("silence_gap_mean_s must be > 0");
  if (!(utterance_median_s > 0.0) || !(utterance_sigma >= 0.0))
    throw ConfigInvalid("utterance length parameters must be positive");
  if (speaker_pool_size > 0 && speaker_pool_size < n_speakers)
    throw ConfigInvalid("speaker pool smaller than n_speakers");
  if (n_speakers == 1 && target_overlap_ratio > 0.0)
    throw SpecInfeasible("a single speaker cannot overlap (target ratio " +
                         fmt_double(target_overlap_ratio) + ")");
}

double table1_overlap_preset(int n_speakers) {
  switch (n_speakers) {
    case 1: return 0.0;
    case 2: return 0.341;
    case 3: return 0.342;
    case 4: return 0.315;
    default: throw ConfigInvalid("no overlap preset for " + std::to_string(n_speakers) + " speakers");
  }
}

std::vector<SpeakerProfile> make_speaker_pool(int n, std::uint64_t seed, int base_dim) {
  if (n < 0 || base_dim < 1) throw ConfigInvalid("make_speaker_pool: bad size");
  std::mt19937_64 rng(seed);
  std::vector<SpeakerProfile> pool;
  for (int i = 0; i < n; ++i) {
    SpeakerProfile cand;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      cand = random_profile(rng, base_dim, speaker_name(i));
      bool distinct = true;
      for (const SpeakerProfile &q : pool)
        if (envelope_correlation(cand.envelope, q.envelope) > 0.6) distinct = false;
      if (distinct) break;
    }
    pool.push_back(std::move(cand));
  }
  return pool;
}

double interval_overlap_ratio(const std::vector<Utterance> &utts) {
  std::vector<std::pair<double, int>> ev;
  for (const Utterance &u : utts) {
    if (u.offset_s <= u.onset_s) continue;
    ev.emplace_back(u.onset_s, +1);
    ev.emplace_back(u.offset_s, -1);
  }
  std::sort(ev.begin(), ev.end());
  double speech = 0.0, overlap = 0.0, prev = 0.0;
  int active = 0;
  for (const auto &[t, d] : ev) {
    const double dt = t - prev;
    if (active >= 1) speech += dt;
    if (active >= 2) overlap += dt;
    active += d;
    prev = t;
  }
  return speech > 0.0 ? overlap / speech : 0.0;
}

std::vector<Utterance> place_utterances(const MixtureSpec &spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::exponential_distribution<double> gap(1.0 / spec.silence_gap_mean_s);
  std::uniform_real_distribution<double> frac(0.3, 0.8);

  std::vector<int> first(static_cast<std::size_t>(spec.n_speakers));
  std::iota(first.begin(), first.end(), 0);
  std::shuffle(first.begin(), first.end(), rng);

  std::vector<Utterance> utts;
  double max_end = 0.0, last_len = 0.0;
  int last_speaker = -1;
  const bool can_overlap = spec.n_speakers > 1 && spec.target_overlap_ratio > 0.0;
  for (std::size_t k = 0;; ++k) {
    const double len = draw_length(rng, spec);
    double start;
    bool overlapping = false;
    if (k == 0) {
      start = 0.5 * gap(rng);
    } else if (can_overlap && interval_overlap_ratio(utts) < spec.target_overlap_ratio) {
      const double ov = frac(rng) * std::min(len, last_len);
      start = std::max(0.0, max_end - ov);
      overlapping = true;
    } else {
      start = max_end + gap(rng);
    }
    if (start + kMinUtteranceS > spec.duration_s) break;

    int speaker;
    if (k < first.size()) {
      speaker = first[k];
    } else {
      std::vector<int> busy = overlapping ? speakers_active_at(utts, start, start + len)
                                          : std::vector<int>{};
      if (!overlapping && last_speaker >= 0 && spec.n_speakers > 1) busy.push_back(last_speaker);
      std::vector<int> free;
      for (int s = 0; s < spec.n_speakers; ++s)
        if (std::find(busy.begin(), busy.end(), s) == busy.end()) free.push_back(s);
      if (free.empty()) {
        // Everyone is talking; fall back to a silence gap.
        start = max_end + gap(rng);
        if (start + kMinUtteranceS > spec.duration_s) break;
        for (int s = 0; s < spec.n_speakers; ++s)
          if (s != last_speaker || spec.n_speakers == 1) free.push_back(s);
      }
      std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
      speaker = free[pick(rng)];
    }
    const double end = std::min(start + len, spec.duration_s);
    utts.push_back({speaker, start, end});
    max_end = std::max(max_end, end);
    last_len = end - start;
    last_speaker = speaker;
  }
  return utts;
}

LabelMatrix rasterize(const std::vector<Utterance> &utts,
                      const std::vector<std::string> &speaker_ids,
                      std::size_t n_samples, const feat::FrontendConfig &fe) {
  const int t0 = feat::num_base_frames(n_samples, fe);
  const int T = (t0 + fe.subsample - 1) / fe.subsample;
  LabelMatrix lab;
  lab.frame_period_s = fe.frame_period_s();
  lab.speaker_ids = speaker_ids;
  lab.activity = ad::Matrix<float>::Zero(T, static_cast<ad::Index>(speaker_ids.size()));
  for (int t = 0; t < T; ++t) {
    const double c = frame_centre_s(t, fe);
    for (const Utterance &u : utts)
      if (c >= u.onset_s && c < u.offset_s) lab.activity(t, u.speaker) = 1.0f;
  }
  return lab;
}

double measure_overlap_ratio(const LabelMatrix &labels) {
  long speech = 0, overlap = 0;
  for (ad::Index t = 0; t < labels.activity.rows(); ++t) {
    int n = 0;
    for (ad::Index s = 0; s < labels.activity.cols(); ++s)
      if (labels.activity(t, s) > 0.5f) ++n;
    if (n >= 1) ++speech;
    if (n >= 2) ++overlap;
  }
  return speech > 0 ? static_cast<double>(overlap) / static_cast<double>(speech) : 0.0;
}

LabelMatrix simulate_labels(const MixtureSpec &spec, const feat::FrontendConfig &fe) {
  fe.validate();
  std::vector<Utterance> utts = place_utterances(spec);
  std::vector<std::string> ids;
  for (int s = 0; s < spec.n_speakers; ++s) ids.push_back(speaker_name(s));
  LabelMatrix lab = rasterize(utts, ids, num_samples(spec, fe), fe);
  std::vector<SpeakerProfile> dummy(ids.size());
  compact_speakers(utts, dummy, lab);
  return lab;
}

Mixture simulate(const MixtureSpec &spec, const feat::FrontendConfig &fe) {
  fe.validate();
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  Mixture m;
  m.speakers = pick_speakers(spec, rng, fe.n_mels);
  m.utterances = place_utterances(spec);

  const std::size_t n = num_samples(spec, fe);
  std::vector<std::string> ids;
  for (const SpeakerProfile &p : m.speakers) ids.push_back(p.id);
  m.labels = rasterize(m.utterances, ids, n, fe);
  compact_speakers(m.utterances, m.speakers, m.labels);
  m.overlap_ratio = measure_overlap_ratio(m.labels);

  std::vector<double> mix(n, 0.0);
  for (std::size_t s = 0; s < m.speakers.size(); ++s) {
    std::mt19937_64 src_rng(spec.seed + 0x51ed270b27ULL * (s + 1));
    const std::vector<double> src = render_source(m.speakers[s], n, fe, src_rng);
    for (const Utterance &u : m.utterances) {
      if (u.speaker != static_cast<int>(s)) continue;
      const auto a = static_cast<std::size_t>(std::llround(u.onset_s * fe.sample_rate_hz));
      const auto b = std::min(n, static_cast<std::size_t>(std::llround(u.offset_s * fe.sample_rate_hz)));
      for (std::size_t i = a; i < b; ++i) mix[i] += src[i];
    }
  }
  if (spec.noise_snr_db) {
    const double noise_rms = kSourceRms / std::pow(10.0, *spec.noise_snr_db / 20.0);
    std::mt19937_64 noise_rng(spec.seed + 0x2545f4914f6cdd1dULL);
    std::normal_distribution<double> gauss(0.0, noise_rms);
    for (double &v : mix) v += gauss(noise_rng);
  }
  m.wave.sample_rate_hz = fe.sample_rate_hz;
  m.wave.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    m.wave.samples[i] = static_cast<float>(std::clamp(mix[i], -1.0, 1.0));
  return m;
}

std::vector<score::RttmSegment> labels_to_rttm(const LabelMatrix &labels,
                                               const std::string &recording_id) {
  std::vector<score::RttmSegment> out;
  const ad::Index T = labels.activity.rows();
  for (ad::Index s = 0; s < labels.activity.cols(); ++s) {
    ad::Index t = 0;
    while (t < T) {
      if (labels.activity(t, s) <= 0.5f) { ++t; continue; }
      const ad::Index a = t;
      while (t < T && labels.activity(t, s) > 0.5f) ++t;
      out.push_back({recording_id, static_cast<double>(a) * labels.frame_period_s,
                     static_cast<double>(t - a) * labels.frame_period_s,
                     labels.speaker_ids[static_cast<std::size_t>(s)]});
    }
  }
  score::sort_segments(out);
  return out;
}

std::vector<score::RttmSegment> to_rttm(const Mixture &m, const std::string &recording_id) {
  return labels_to_rttm(m.labels, recording_id);
}

void write_labels(const std::string &path, const LabelMatrix &labels) {
  io::Archive a;
  a.meta["kind"] = "labels";
  a.meta["frame_period_s"] = fmt_double(labels.frame_period_s);
  std::string ids;
  for (std::size_t i = 0; i < labels.speaker_ids.size(); ++i)
    ids += (i ? "," : "") + labels.speaker_ids[i];
  a.meta["speaker_ids"] = ids;
  io::Tensor t;
  t.dims = {static_cast<std::uint64_t>(labels.activity.rows()),
            static_cast<std::uint64_t>(labels.activity.cols())};
  t.data.assign(labels.activity.data(), labels.activity.data() + labels.activity.size());
  a.tensors.emplace_back("activity", std::move(t));
  io::write_archive(path, a);
}

LabelMatrix read_labels(const std::string &path) {
  const io::Archive a = io::read_archive(path);
  const io::Tensor &t = a.at("activity");
  if (t.dims.size() != 2) throw IoError(path + ": activity must be rank 2");
  LabelMatrix lab;
  lab.activity = Eigen::Map<const ad::Matrix<float>>(
      t.data.data(), static_cast<ad::Index>(t.dims[0]), static_cast<ad::Index>(t.dims[1]));
  lab.frame_period_s = std::stod(a.meta_at("frame_period_s"));
  std::stringstream ss(a.meta_at("speaker_ids"));
  for (std::string id; std::getline(ss, id, ',');) lab.speaker_ids.push_back(id);
  if (lab.speaker_ids.size() != t.dims[1])
    throw IoError(path + ": speaker id count does not match activity columns");
  return lab;
}

// ---------------------------------------------------------------------------

std::vector<CorpusDraw> corpus_draws(const CorpusOptions &opts) {
  if (opts.n_mixtures < 0) throw ConfigInvalid("n_mixtures must be >= 0");
  if (opts.min_speakers < 1 || opts.max_speakers < opts.min_speakers)
    throw ConfigInvalid("speaker count range is empty");
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<int> count(opts.min_speakers, opts.max_speakers);
  std::vector<CorpusDraw> draws;
  for (int i = 0; i < opts.n_mixtures; ++i) {
    const int n = count(rng);
    const std::uint64_t s = rng();
    draws.push_back({n, s});
  }
  return draws;
}

std::vector<ManifestRecord> make_corpus(const CorpusOptions &opts) {
  const std::vector<CorpusDraw> draws = corpus_draws(opts);
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  if (ec) throw IoError("cannot create " + opts.out_dir + ": " + ec.message());

  std::vector<ManifestRecord> recs(draws.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;

  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < draws.size();) {
      try {
        MixtureSpec spec = opts.spec;
        spec.n_speakers = draws[i].n_speakers;
        spec.seed = draws[i].seed;
        if (opts.overlap_preset) spec.target_overlap_ratio = table1_overlap_preset(spec.n_speakers);
        const Mixture m = simulate(spec, opts.frontend);

        char name[64];
        std::snprintf(name, sizeof name, "%s%05zu", opts.prefix.c_str(), i);
        ManifestRecord r;
        r.id = name;
        r.n_speakers = m.labels.num_speakers();
        r.overlap_ratio = m.overlap_ratio;
        r.seed = spec.seed;
        r.duration_s = spec.duration_s;
        const fs::path dir(opts.out_dir);
        if (opts.write_wav) {
          r.wav = r.id + ".wav";
          feat::write_wav((dir / r.wav).string(), m.wave);
        }
        if (opts.write_features) {
          r.features = r.id + ".feat";
          feat::write_features((dir / r.features).string(), feat::featurize(m.wave, opts.frontend));
        }
        r.labels = r.id + ".labels";
        write_labels((dir / r.labels).string(), m.labels);
        r.rttm = r.id + ".rttm";
        score::write_rttm((dir / r.rttm).string(), to_rttm(m, r.id));
        recs[i] = std::move(r);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(draws.size())));
  if (jobs == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(work);
    for (std::thread &t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
  write_manifest((fs::path(opts.out_dir) / "manifest.jsonl").string(), recs);
  return recs;
}

void write_manifest(const std::string &path, const std::vector<ManifestRecord> &recs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const ManifestRecord &r : recs) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["wav"] = r.wav;
    j["features"] = r.features;
    j["labels"] = r.labels;
    j["rttm"] = r.rttm;
    j["n_speakers"] = r.n_speakers;
    j["overlap_ratio"] = r.overlap_ratio;
    j["seed"] = r.seed;
    j["duration_s"] = r.duration_s;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ManifestRecord> read_manifest(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path);
  std::vector<ManifestRecord> recs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.id = j.at("id").get<std::string>();
      r.wav = j.value("wav", "");
      r.features = j.value("features", "");
      r.labels = j.at("labels").get<std::string>();
      r.rttm = j.value("rttm", "");
      r.n_speakers = j.at("n_speakers").get<int>();
      r.overlap_ratio = j.value("overlap_ratio", 0.0);
      r.seed = j.value("seed", std::uint64_t{0});
      r.duration_s = j.value("duration_s", 0.0);
      recs.push_back(std::move(r));
    } catch (const nlohmann::json::exception &e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": bad manifest record: " + e.what());
    }
  }
  return recs;
}

}  // namespace eda::sim
