// eda/featfront.hpp
//
// Log-Mel front-end: waveform -> framed power spectrum -> triangular Mel
// bank -> log, followed by context splicing and frame subsampling. With the
// defaults (23 bins, +-7 frames, 25 ms / 10 ms, subsample 10) every output
// frame is 345-dimensional at a 100 ms period.

#ifndef EDA_FEATFRONT_HPP_
#define EDA_FEATFRONT_HPP_

#include <complex>
#include <string>
#include <vector>

#include "eda/diffcore.hpp"

namespace eda::feat {

using FloatMatrix = ad::Matrix<float>;

struct Waveform {
  std::vector<float> samples;  // nominally in [-1, 1]
  int sample_rate_hz = 8000;
};

struct FrontendConfig {
  int sample_rate_hz = 8000;
  double window_s = 0.025;
  double hop_s = 0.010;
  int n_fft = 0;  // 0: next power of two >= window length
  int n_mels = 23;
  double f_min_hz = 0.0;
  double f_max_hz = 0.0;  // 0: Nyquist
  double power_floor = 1e-10;
  int context = 7;
  int subsample = 10;

  int window_samples() const;
  int hop_samples() const;
  int fft_size() const;
  double nyquist_hz() const { return sample_rate_hz / 2.0; }
  double top_hz() const { return f_max_hz > 0.0 ? f_max_hz : nyquist_hz(); }
  int feature_dim() const { return n_mels * (2 * context + 1); }
  double frame_period_s() const { return hop_s * subsample; }
  void validate() const;  // throws ConfigInvalid
};

struct FeatureSequence {
  FloatMatrix frames;  // T x F
  double frame_period_s = 0.1;
  int base_dim = 23;
  int context = 7;
  int subsample = 10;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// n_mels x (n_fft/2 + 1) triangular weights on the FFT bin grid.
ad::Matrix<double> mel_filterbank(const FrontendConfig &cfg);

// Peak frequency (Hz) of each triangular filter.
std::vector<double> mel_center_frequencies(const FrontendConfig &cfg);

// Radix-2 in-place FFT; size must be a power of two.
void fft(std::vector<std::complex<double>> &x, bool inverse = false);

// Number of analysis frames for n samples (one zero-padded frame when the
// signal is shorter than a window).
int num_base_frames(std::size_t n_samples, const FrontendConfig &cfg);

// T0 x n_mels matrix of log(mel power + floor).
FloatMatrix log_mel(const Waveform &wave, const FrontendConfig &cfg);

// Row t of the result concatenates base rows t*subsample-context ..
// t*subsample+context (clamped to the valid range); T = ceil(T0/subsample).
FeatureSequence splice_subsample(const FloatMatrix &base, int context,
                                 int subsample, double base_period_s = 0.01);

FeatureSequence featurize(const Waveform &wave, const FrontendConfig &cfg);

// Mono 16-bit PCM RIFF/WAVE.
Waveform read_wav(const std::string &path);
void write_wav(const std::string &path, const Waveform &wave);

// EDAT container with a "features" tensor and frame metadata.
void write_features(const std::string &path, const FeatureSequence &fs);
FeatureSequence read_features(const std::string &path);

}  // namespace eda::feat

#endif  // EDA_FEATFRONT_HPP_
