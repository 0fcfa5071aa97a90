// eda/infer.hpp
//
// Inference: embeddings -> attractors -> speaker count -> posteriors ->
// median-filtered, thresholded activity -> RTTM segments.

#ifndef EDA_INFER_HPP_
#define EDA_INFER_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eda/mixsim.hpp"
#include "eda/model.hpp"
#include "eda/score.hpp"

namespace eda::infer {

using DMatrix = ad::Matrix<double>;

// Restricts the frames the attractor encoder sees.
struct Probe {
  enum class Kind { kNone, kSubsample, kLast };
  Kind kind = Kind::kNone;
  int n = 1;

  static Probe parse(const std::string &s);  // none | subsample:N | last:N
  std::string to_string() const;
};

inline constexpr int kFallbackAttractors = 20;

struct InferConfig {
  double tau = 0.5;
  double activity_threshold = 0.5;
  int median_filter_frames = 11;  // odd; 1 disables
  model::OrderMode order = model::OrderMode::kShuffled;
  std::uint64_t seed = 0;
  std::optional<int> oracle_speakers;
  Probe probe;
  int max_attractors = 0;  // 0: trained speaker count + 1 (kFallbackAttractors if unknown)

  // Attractors decoded for a model trained on up to trained_speakers speakers
  // (0: unknown), before raising to the oracle count.
  int decode_steps(int trained_speakers) const;

  void validate() const;  // throws ConfigInvalid
};

// max{s : p_s >= tau} (1-based), or 0 when no entry qualifies.
int estimate_speaker_count(std::span<const double> p, double tau);

struct PosteriorMatrix {
  DMatrix probs;  // S x T
  double frame_period_s = 0.1;

  int num_speakers() const { return static_cast<int>(probs.rows()); }
  int num_frames() const { return static_cast<int>(probs.cols()); }
};

// sigmoid(A E^T) for A (S x D), E (T x D). Throws EmptyDiarization if S = 0.
PosteriorMatrix posteriors(const DMatrix &attractors, const DMatrix &embeddings,
                           double frame_period_s = 0.1);

// Sliding median with edge replication; width must be odd.
std::vector<double> median_filter(std::span<const double> x, int width);

struct Binarized {
  sim::LabelMatrix labels;
  std::vector<score::RttmSegment> segments;
};

// Speakers are named spk0, spk1, ... in attractor order.
Binarized binarize(const PosteriorMatrix &y, const InferConfig &cfg,
                   const std::string &recording_id);

// Row indices kept by the probe: subsample:N keeps 0, N, 2N, ...;
// last:N keeps the final ceil(T / N) rows.
std::vector<ad::Index> probe_rows(ad::Index T, const Probe &probe);
DMatrix probe_transform(const DMatrix &embeddings, const Probe &probe);

struct Projection {
  DMatrix embeddings;       // T x 2
  DMatrix attractors;       // S x 2
  DMatrix basis;            // D x 2, columns by decreasing variance
  Eigen::RowVectorXd mean;  // 1 x D
  Eigen::Vector2d explained_variance;
};

// PCA of the embedding rows; attractors use the same centring and basis.
Projection project2d(const DMatrix &embeddings, const DMatrix &attractors);

// Columns x,y,kind,index with kind in {embedding, attractor, silence-frame}.
void write_projection_csv(const std::string &path, const Projection &p,
                          const std::vector<bool> &silence_frames);

struct Result {
  DMatrix embeddings;               // T x D
  DMatrix attractors;               // decoded attractors, all steps
  std::vector<double> existence;    // one probability per decoded attractor
  int estimated_speakers = 0;
  int used_speakers = 0;            // oracle count when given
  PosteriorMatrix posterior;        // used_speakers x T (empty if 0)
  Binarized output;
};

// Order of embeddings fed to the attractor encoder (after the probe).
std::vector<ad::Index> eda_input_order(ad::Index n, const InferConfig &cfg);

Result diarize(model::EendEda<float> &m, const feat::FloatMatrix &features,
               const InferConfig &cfg, const std::string &recording_id,
               double frame_period_s = 0.1);

struct CorpusEvaluation {
  score::ScoreReport report;            // pooled over all recordings
  std::optional<double> jer;            // mean over recordings, when asked
  double count_accuracy = 0.0;          // estimated count == reference count
  std::vector<int> estimated_counts;    // per manifest record
  std::vector<int> reference_counts;
  std::vector<score::RttmSegment> hypothesis;
};

// Diarizes every manifest record (features + reference RTTM) and scores
// the pooled result. With oracle_from_reference each recording uses its
// reference speaker count.
CorpusEvaluation evaluate_manifest(model::EendEda<float> &m, const std::string &manifest_path,
                                   const InferConfig &cfg, bool oracle_from_reference,
                                   const score::ScoreOptions &sopts = {}, bool with_jer = false,
                                   int jobs = 1);

}  // namespace eda::infer

#endif  // EDA_INFER_HPP_
