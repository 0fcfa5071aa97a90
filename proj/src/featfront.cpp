// src/featfront.cpp

#include "eda/featfront.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "eda/errors.hpp"
#include "eda/tensor_io.hpp"

namespace eda::feat {

int FrontendConfig::window_samples() const {
  return static_cast<int>(std::lround(window_s * sample_rate_hz));
}

int FrontendConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_s * sample_rate_hz));
}

int FrontendConfig::fft_size() const {
  if (n_fft > 0) return n_fft;
  int n = 1;
  while (n < window_samples()) n <<= 1;
  return n;
}

void FrontendConfig::validate() const {
  if (sample_rate_hz <= 0) throw ConfigInvalid("sample rate must be positive");
  if (hop_samples() <= 0) throw ConfigInvalid("hop must be positive");
  if (window_samples() < hop_samples())
    throw ConfigInvalid("window must be at least one hop");
  const int nfft = fft_size();
  if (nfft < window_samples() || (nfft & (nfft - 1)) != 0)
    throw ConfigInvalid("n_fft must be a power of two >= window length");
  if (n_mels < 1) throw ConfigInvalid("n_mels must be >= 1");
  if (f_min_hz < 0.0 || top_hz() <= f_min_hz || top_hz() > nyquist_hz())
    throw ConfigInvalid("mel range must lie inside (0, sample_rate/2]");
  if (!(power_floor > 0.0)) throw ConfigInvalid("power floor must be > 0");
  if (context < 0) throw ConfigInvalid("context must be >= 0");
  if (subsample < 1) throw ConfigInvalid("subsample must be >= 1");
}

double hz_to_mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * std::expm1(mel / 1127.0); }

namespace {

std::vector<double> mel_edges(const FrontendConfig &cfg) {
  const double lo = hz_to_mel(cfg.f_min_hz);
  const double hi = hz_to_mel(cfg.top_hz());
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (cfg.n_mels + 1));
  return edges;
}

}  // namespace

std::vector<double> mel_center_frequencies(const FrontendConfig &cfg) {
  const auto edges = mel_edges(cfg);
  return {edges.begin() + 1, edges.end() - 1};
}

ad::Matrix<double> mel_filterbank(const FrontendConfig &cfg) {
  const int nfft = cfg.fft_size();
  const int nbins = nfft / 2 + 1;
  const auto edges = mel_edges(cfg);
  ad::Matrix<double> bank = ad::Matrix<double>::Zero(cfg.n_mels, nbins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = hz_to_mel(edges[m]);
    const double centre = hz_to_mel(edges[m + 1]);
    const double right = hz_to_mel(edges[m + 2]);
    for (int k = 0; k < nbins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * cfg.sample_rate_hz / nfft);
      double w = 0.0;
      if (mel > left && mel <= centre)
        w = (mel - left) / (centre - left);
      else if (mel > centre && mel < right)
        w = (right - mel) / (right - centre);
      bank(m, k) = w;
    }
  }
  return bank;
}

void fft(std::vector<std::complex<double>> &x, bool inverse) {
  const std::size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw ConfigInvalid("fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) *
                       (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = x[i + k];
        const auto v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse)
    for (auto &v : x) v /= static_cast<double>(n);
}

int num_base_frames(std::size_t n_samples, const FrontendConfig &cfg) {
  const auto win = static_cast<std::size_t>(cfg.window_samples());
  const auto hop = static_cast<std::size_t>(cfg.hop_samples());
  if (n_samples <= win) return 1;
  return static_cast<int>(1 + (n_samples - win) / hop);
}

FloatMatrix log_mel(const Waveform &wave, const FrontendConfig &cfg) {
  cfg.validate();
  if (wave.samples.empty()) throw InputEmpty("log_mel: empty waveform");
  if (wave.sample_rate_hz != cfg.sample_rate_hz)
    throw ConfigInvalid("log_mel: waveform is " +
                        std::to_string(wave.sample_rate_hz) +
                        " Hz, front-end expects " +
                        std::to_string(cfg.sample_rate_hz));
  const int win = cfg.window_samples();
  const int hop = cfg.hop_samples();
  const int nfft = cfg.fft_size();
  const int nbins = nfft / 2 + 1;
  const int frames = num_base_frames(wave.samples.size(), cfg);
  const ad::Matrix<double> bank = mel_filterbank(cfg);

  std::vector<double> window(win);
  for (int i = 0; i < win; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (win - 1));

  FloatMatrix out(frames, cfg.n_mels);
  std::vector<std::complex<double>> buf(nfft);
  Eigen::VectorXd power(nbins);
  for (int t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * hop;
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (int i = 0; i < win; ++i) {
      const std::size_t idx = start + i;
      const double s = idx < wave.samples.size() ? wave.samples[idx] : 0.0;
      buf[i] = s * window[i];
    }
    fft(buf);
    for (int k = 0; k < nbins; ++k) power(k) = std::norm(buf[k]);
    const Eigen::VectorXd mel = bank * power;
    for (int m = 0; m < cfg.n_mels; ++m)
      out(t, m) = static_cast<float>(std::log(mel(m) + cfg.power_floor));
  }
  return out;
}

FeatureSequence splice_subsample(const FloatMatrix &base, int context,
                                 int subsample, double base_period_s) {
  if (context < 0) throw ConfigInvalid("splice: context must be >= 0");
  if (subsample < 1) throw ConfigInvalid("splice: subsample must be >= 1");
  const auto t0 = base.rows();
  if (t0 == 0) throw InputEmpty("splice: no input frames");
  const auto dim = base.cols();
  const auto width = 2 * context + 1;
  const auto frames = (t0 + subsample - 1) / subsample;
  FeatureSequence fs;
  fs.frames.resize(frames, dim * width);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Index centre = t * subsample;
    for (Eigen::Index j = 0; j < width; ++j) {
      const Eigen::Index src =
          std::clamp<Eigen::Index>(centre - context + j, 0, t0 - 1);
      fs.frames.block(t, j * dim, 1, dim) = base.row(src);
    }
  }
  fs.frame_period_s = base_period_s * subsample;
  fs.base_dim = static_cast<int>(dim);
  fs.context = context;
  fs.subsample = subsample;
  return fs;
}

FeatureSequence featurize(const Waveform &wave, const FrontendConfig &cfg) {
  return splice_subsample(log_mel(wave, cfg), cfg.context, cfg.subsample,
                          cfg.hop_s);
}

// ---------------------------------------------------------------------------
// WAV
// ---------------------------------------------------------------------------

namespace {

template <typename T>
T read_le(const std::string &buf, std::size_t pos) {
  if (pos + sizeof(T) > buf.size()) throw IoError("wav: truncated header");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::string &out, T v) {
  out.append(reinterpret_cast<const char *>(&v), sizeof(T));
}

}  // namespace

Waveform read_wav(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < 12 || buf.compare(0, 4, "RIFF") != 0 ||
      buf.compare(8, 4, "WAVE") != 0)
    throw IoError(path + ": not a RIFF/WAVE file");

  Waveform w;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id = buf.substr(pos, 4);
    const auto size = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > buf.size()) throw IoError(path + ": truncated chunk");
    if (id == "fmt ") {
      const auto format = read_le<std::uint16_t>(buf, body);
      const auto channels = read_le<std::uint16_t>(buf, body + 2);
      w.sample_rate_hz = static_cast<int>(read_le<std::uint32_t>(buf, body + 4));
      const auto bits = read_le<std::uint16_t>(buf, body + 14);
      if (format != 1 || channels != 1 || bits != 16)
        throw IoError(path + ": only mono 16-bit PCM is supported");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw IoError(path + ": data chunk before fmt");
      const std::size_t n = size / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        w.samples[i] = read_le<std::int16_t>(buf, body + 2 * i) / 32768.0f;
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw IoError(path + ": no data chunk");
}

void write_wav(const std::string &path, const Waveform &wave) {
  const auto n = static_cast<std::uint32_t>(wave.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put_le<std::uint32_t>(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate_hz));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate_hz) * 2);
  put_le<std::uint16_t>(out, 2);
  put_le<std::uint16_t>(out, 16);
  out += "data";
  put_le<std::uint32_t>(out, 2 * n);
  for (float s : wave.samples) {
    const float c = std::clamp(s, -1.0f, 32767.0f / 32768.0f);
    put_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32768.0f)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path);
}

void write_features(const std::string &path, const FeatureSequence &fs) {
  io::Archive a;
  std::ostringstream period;
  period.precision(17);
  period << fs.frame_period_s;
  a.meta["kind"] = "features";
  a.meta["frame_period_s"] = period.str();
  a.meta["base_dim"] = std::to_string(fs.base_dim);
  a.meta["context"] = std::to_string(fs.context);
  a.meta["subsample"] = std::to_string(fs.subsample);
  io::Tensor t;
  t.dims = {static_cast<std::uint64_t>(fs.frames.rows()),
            static_cast<std::uint64_t>(fs.frames.cols())};
  t.data.assign(fs.frames.data(), fs.frames.data() + fs.frames.size());
  a.tensors.emplace_back("features", std::move(t));
  io::write_archive(path, a);
}

FeatureSequence read_features(const std::string &path) {
  const io::Archive a = io::read_archive(path);
  const io::Tensor &t = a.at("features");
  if (t.dims.size() != 2) throw IoError(path + ": features must be rank 2");
  FeatureSequence fs;
  fs.frames = Eigen::Map<const FloatMatrix>(
      t.data.data(), static_cast<Eigen::Index>(t.dims[0]),
      static_cast<Eigen::Index>(t.dims[1]));
  fs.frame_period_s = std::stod(a.meta_at("frame_period_s"));
  fs.base_dim = std::stoi(a.meta_at("base_dim"));
  fs.context = std::stoi(a.meta_at("context"));
  fs.subsample = std::stoi(a.meta_at("subsample"));
  if (fs.dim() != fs.base_dim * (2 * fs.context + 1))
    throw IoError(path + ": feature dimension inconsistent with metadata");
  if (fs.frames.rows() < 1) throw IoError(path + ": no frames");
  return fs;
}

}  // namespace eda::feat
