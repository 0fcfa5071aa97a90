// eda/mixsim.hpp
//
// Synthetic multi-speaker mixtures with a controlled overlap ratio.
//
// Speakers are filtered white noise, each shaped by a fixed spectral
// envelope over the Mel bins. Utterances (log-normal lengths) are laid out
// one after another; before each one the generator compares the overlap
// ratio achieved so far with the target and either starts the next
// utterance inside the previous one (negative gap) or after a silence
// (exponential gap). The overlap ratio is overlapped speech time over total
// speech time.

#ifndef EDA_MIXSIM_HPP_
#define EDA_MIXSIM_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eda/featfront.hpp"
#include "eda/score.hpp"

namespace eda::sim {

struct SpeakerProfile {
  std::string id;
  std::vector<double> envelope;  // one nonnegative weight per Mel bin
  double gain_db = 0.0;
};

struct LabelMatrix {
  ad::Matrix<float> activity;  // T x S, entries 0/1
  std::vector<std::string> speaker_ids;
  double frame_period_s = 0.1;

  int num_frames() const { return static_cast<int>(activity.rows()); }
  int num_speakers() const { return static_cast<int>(activity.cols()); }
};

struct MixtureSpec {
  int n_speakers = 2;
  double target_overlap_ratio = 0.341;
  double duration_s = 60.0;
  double silence_gap_mean_s = 1.0;
  std::optional<double> noise_snr_db = 30.0;
  std::uint64_t seed = 0;
  double utterance_median_s = 2.5;
  double utterance_sigma = 0.4;  // of log length
  // Speakers are drawn from a fixed pool (seeded by pool_seed); 0 draws
  // fresh speakers from the mixture seed.
  int speaker_pool_size = 16;
  std::uint64_t pool_seed = 0;

  void validate() const;  // ConfigInvalid / SpecInfeasible
};

// Overlap ratios of the 1..4-speaker training sets (0.0, 34.1, 34.2, 31.5 %).
double table1_overlap_preset(int n_speakers);

struct Utterance {
  int speaker = 0;  // index into Mixture::speakers
  double onset_s = 0.0;
  double offset_s = 0.0;
};

struct Mixture {
  feat::Waveform wave;
  std::vector<SpeakerProfile> speakers;  // only speakers that talk
  std::vector<Utterance> utterances;
  LabelMatrix labels;                    // on the feature frame grid
  double overlap_ratio = 0.0;            // measured on labels
};

std::vector<SpeakerProfile> make_speaker_pool(int n, std::uint64_t seed,
                                              int base_dim = 23);

// Timeline only (no audio). Speakers are indices 0..n_speakers-1.
std::vector<Utterance> place_utterances(const MixtureSpec &spec);

// Overlapped time / speech time computed on exact intervals.
double interval_overlap_ratio(const std::vector<Utterance> &utts);

// Label frame t is active when the speaker talks at the centre of the
// analysis window of base frame t * subsample.
LabelMatrix rasterize(const std::vector<Utterance> &utts,
                      const std::vector<std::string> &speaker_ids,
                      std::size_t n_samples, const feat::FrontendConfig &fe);

Mixture simulate(const MixtureSpec &spec, const feat::FrontendConfig &fe = {});

// Labels-only fast path (skips audio rendering).
LabelMatrix simulate_labels(const MixtureSpec &spec,
                            const feat::FrontendConfig &fe = {});

// Frames with >= 2 active speakers over frames with >= 1; 0 without speech.
double measure_overlap_ratio(const LabelMatrix &labels);

std::vector<score::RttmSegment> to_rttm(const Mixture &m,
                                        const std::string &recording_id);

// Converts frame labels to maximal-run RTTM segments.
std::vector<score::RttmSegment> labels_to_rttm(const LabelMatrix &labels,
                                               const std::string &recording_id);

void write_labels(const std::string &path, const LabelMatrix &labels);
LabelMatrix read_labels(const std::string &path);

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

struct CorpusOptions {
  int n_mixtures = 0;
  MixtureSpec spec;  // template; seed and n_speakers are overridden per mixture
  int min_speakers = 1;
  int max_speakers = 1;
  bool overlap_preset = true;  // target ratio from table1_overlap_preset(n)
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string prefix = "mix";
  bool write_wav = false;
  bool write_features = true;
  feat::FrontendConfig frontend;
  int jobs = 1;
};

struct ManifestRecord {
  std::string id;
  std::string wav;       // relative to the manifest directory; may be empty
  std::string features;  // "
  std::string labels;
  std::string rttm;
  int n_speakers = 0;
  double overlap_ratio = 0.0;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
};

// The per-mixture draw (speaker count, then mixture seed) taken from the
// corpus RNG stream in order.
struct CorpusDraw {
  int n_speakers;
  std::uint64_t seed;
};
std::vector<CorpusDraw> corpus_draws(const CorpusOptions &opts);

// Writes <out_dir>/manifest.jsonl plus per-mixture files. Throws IoError.
std::vector<ManifestRecord> make_corpus(const CorpusOptions &opts);

void write_manifest(const std::string &path, const std::vector<ManifestRecord> &recs);
std::vector<ManifestRecord> read_manifest(const std::string &path);

}  // namespace eda::sim

#endif  // EDA_MIXSIM_HPP_
