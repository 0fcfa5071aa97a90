// eda/score.hpp
//
// RTTM I/O and diarization scoring (DER with collar, JER).
//
// Scoring works on integer milliseconds. For each recording the reference
// and hypothesis are cut into homogeneous regions; regions within +-collar
// of any reference speaker boundary are not scored. Reference and
// hypothesis speakers are matched one-to-one to maximise jointly active
// time, and each region contributes
//   miss      = max(0, n_ref - n_hyp)
//   false al. = max(0, n_hyp - n_ref)
//   confusion = min(n_ref, n_hyp) - n_correct
// times its duration. DER = (miss + false alarm + confusion) / scored
// reference speech.

#ifndef EDA_SCORE_HPP_
#define EDA_SCORE_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace eda::score {

struct RttmSegment {
  std::string recording_id;
  double onset_s = 0.0;
  double duration_s = 0.0;
  std::string speaker_id;

  double offset_s() const { return onset_s + duration_s; }
  bool operator==(const RttmSegment &) const = default;
};

// Accepts lines "SPEAKER <rec> <chan> <onset> <dur> <ortho> <stype> <spk>
// <conf> <slat>". Blank lines, ';;' comments and non-SPEAKER records are
// skipped. Output is sorted by (recording, onset, speaker, duration).
std::vector<RttmSegment> parse_rttm(std::istream &in);
std::vector<RttmSegment> parse_rttm_string(const std::string &text);
std::vector<RttmSegment> read_rttm(const std::string &path);

// Canonical form: sorted, times with two decimals.
std::string emit_rttm(std::vector<RttmSegment> segments);
void write_rttm(const std::string &path, const std::vector<RttmSegment> &segments);

void sort_segments(std::vector<RttmSegment> &segments);

struct ScoreOptions {
  double collar_s = 0.25;
  bool score_overlap = true;
  int max_exhaustive_speakers = 8;
};

struct SpeakerPair {
  std::string recording_id;
  std::string ref;
  std::string hyp;
};

struct ScoreReport {
  double miss_s = 0.0;
  double falarm_s = 0.0;
  double confusion_s = 0.0;
  double scored_speech_s = 0.0;
  double der = 0.0;
  std::optional<double> jer;
  std::vector<SpeakerPair> mapping;

  // Same quantities in integer milliseconds (exact).
  std::int64_t miss_ms = 0;
  std::int64_t falarm_ms = 0;
  std::int64_t confusion_ms = 0;
  std::int64_t scored_ms = 0;
  // Total duration of scored (non-collar) regions, speech or not.
  std::int64_t scored_region_ms = 0;
};

// Throws UndefinedDER when there is no scored reference speech.
ScoreReport der(const std::vector<RttmSegment> &ref,
                const std::vector<RttmSegment> &hyp,
                const ScoreOptions &opts = {});

// Mean over reference speakers of 1 - |R n H| / |R u H| under the mapping
// maximising total Jaccard index; unmapped reference speakers score 1.
// No collar. Throws UndefinedDER without reference speakers.
double jer(const std::vector<RttmSegment> &ref,
           const std::vector<RttmSegment> &hyp,
           int max_exhaustive_speakers = 8);

std::int64_t to_ms(double seconds);

struct MsInterval {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  bool operator==(const MsInterval &) const = default;
};

// Merged no-score zones [b - collar, b + collar] around every reference
// speaker boundary of one recording.
std::vector<MsInterval> collar_zones(const std::vector<RttmSegment> &ref,
                                     const std::string &recording_id,
                                     double collar_s);

// Human-readable and CSV renderings of a report.
std::string format_report(const ScoreReport &r);
std::string format_report_csv(const ScoreReport &r);

}  // namespace eda::score

#endif  // EDA_SCORE_HPP_
