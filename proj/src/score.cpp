// src/score.cpp

#include "eda/score.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "eda/assignment.hpp"
#include "eda/errors.hpp"

namespace eda::score {

std::int64_t to_ms(double seconds) {
  return static_cast<std::int64_t>(std::llround(seconds * 1000.0));
}

void sort_segments(std::vector<RttmSegment> &segments) {
  std::sort(segments.begin(), segments.end(),
            [](const RttmSegment &a, const RttmSegment &b) {
              if (a.recording_id != b.recording_id)
                return a.recording_id < b.recording_id;
              if (a.onset_s != b.onset_s) return a.onset_s < b.onset_s;
              if (a.speaker_id != b.speaker_id) return a.speaker_id < b.speaker_id;
              return a.duration_s < b.duration_s;
            });
}

namespace {

double parse_number(const std::string &tok, int line, const char *what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception &) {
    throw ParseError(line, std::string("bad ") + what + " '" + tok + "'");
  }
  if (used != tok.size() || !std::isfinite(v))
    throw ParseError(line, std::string("bad ") + what + " '" + tok + "'");
  return v;
}

}  // namespace

std::vector<RttmSegment> parse_rttm(std::istream &in) {
  std::vector<RttmSegment> out;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::istringstream ls(raw);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty() || tok[0].rfind(";;", 0) == 0) continue;
    if (tok[0] != "SPEAKER") continue;
    if (tok.size() < 9 || tok.size() > 10)
      throw ParseError(line, "expected 10 fields, got " + std::to_string(tok.size()));
    RttmSegment s;
    s.recording_id = tok[1];
    s.onset_s = parse_number(tok[3], line, "onset");
    s.duration_s = parse_number(tok[4], line, "duration");
    s.speaker_id = tok[7];
    if (s.onset_s < 0.0) throw ParseError(line, "negative onset");
    if (s.duration_s <= 0.0) throw ParseError(line, "non-positive duration");
    out.push_back(std::move(s));
  }
  sort_segments(out);
  return out;
}

std::vector<RttmSegment> parse_rttm_string(const std::string &text) {
  std::istringstream in(text);
  return parse_rttm(in);
}

std::vector<RttmSegment> read_rttm(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_rttm(in);
}

std::string emit_rttm(std::vector<RttmSegment> segments) {
  sort_segments(segments);
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  for (const auto &s : segments) {
    out << "SPEAKER " << s.recording_id << " 1 " << s.onset_s << ' '
        << s.duration_s << " <NA> <NA> " << s.speaker_id << " <NA> <NA>\n";
  }
  return out.str();
}

void write_rttm(const std::string &path, const std::vector<RttmSegment> &segments) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << emit_rttm(segments);
  if (!out) throw IoError("write failed: " + path);
}

namespace {

using Intervals = std::vector<MsInterval>;

Intervals merge(Intervals v) {
  std::sort(v.begin(), v.end(), [](const MsInterval &a, const MsInterval &b) {
    return a.begin < b.begin || (a.begin == b.begin && a.end < b.end);
  });
  Intervals out;
  for (const auto &iv : v) {
    if (iv.end <= iv.begin) continue;
    if (!out.empty() && iv.begin <= out.back().end)
      out.back().end = std::max(out.back().end, iv.end);
    else
      out.push_back(iv);
  }
  return out;
}

// speaker id -> merged activity, for one recording.
using SpeakerTimeline = std::map<std::string, Intervals>;

SpeakerTimeline timeline_of(const std::vector<RttmSegment> &segs,
                            const std::string &rec) {
  SpeakerTimeline tl;
  for (const auto &s : segs)
    if (s.recording_id == rec)
      tl[s.speaker_id].push_back(
          {to_ms(s.onset_s), to_ms(s.onset_s) + to_ms(s.duration_s)});
  for (auto &[spk, iv] : tl) iv = merge(std::move(iv));
  return tl;
}

bool covers(const Intervals &iv, std::int64_t t) {
  auto it = std::upper_bound(iv.begin(), iv.end(), t,
                             [](std::int64_t v, const MsInterval &x) {
                               return v < x.begin;
                             });
  if (it == iv.begin()) return false;
  --it;
  return t >= it->begin && t < it->end;
}

std::int64_t total(const Intervals &iv) {
  std::int64_t s = 0;
  for (const auto &x : iv) s += x.end - x.begin;
  return s;
}

std::int64_t intersection(const Intervals &a, const Intervals &b) {
  std::int64_t s = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const auto lo = std::max(a[i].begin, b[j].begin);
    const auto hi = std::min(a[i].end, b[j].end);
    if (hi > lo) s += hi - lo;
    if (a[i].end < b[j].end)
      ++i;
    else
      ++j;
  }
  return s;
}

std::set<std::string> recordings_of(const std::vector<RttmSegment> &a,
                                    const std::vector<RttmSegment> &b) {
  std::set<std::string> out;
  for (const auto &s : a) out.insert(s.recording_id);
  for (const auto &s : b) out.insert(s.recording_id);
  return out;
}

// Maximises sum of gain(r, h); returns ref index -> hyp index (or -1).
std::vector<int> best_mapping(const Eigen::MatrixXd &gain, int max_exhaustive) {
  const auto nr = gain.rows(), nh = gain.cols();
  std::vector<int> out(static_cast<std::size_t>(nr), -1);
  if (nr == 0 || nh == 0) return out;
  const Eigen::MatrixXd cost = pad_square(-gain, 0.0);
  const Assignment a = cost.rows() <= max_exhaustive
                           ? exhaustive_min_assignment(cost)
                           : hungarian_min_assignment(cost);
  for (Eigen::Index r = 0; r < nr; ++r) {
    const int h = a.row_to_col[static_cast<std::size_t>(r)];
    if (h < nh && gain(r, h) > 0.0) out[static_cast<std::size_t>(r)] = h;
  }
  return out;
}

}  // namespace

std::vector<MsInterval> collar_zones(const std::vector<RttmSegment> &ref,
                                     const std::string &recording_id,
                                     double collar_s) {
  const std::int64_t c = to_ms(collar_s);
  if (c <= 0) return {};
  Intervals zones;
  for (const auto &[spk, iv] : timeline_of(ref, recording_id)) {
    for (const auto &x : iv) {
      zones.push_back({std::max<std::int64_t>(0, x.begin - c), x.begin + c});
      zones.push_back({std::max<std::int64_t>(0, x.end - c), x.end + c});
    }
  }
  return merge(std::move(zones));
}

ScoreReport der(const std::vector<RttmSegment> &ref,
                const std::vector<RttmSegment> &hyp, const ScoreOptions &opts) {
  ScoreReport rep;
  for (const auto &rec : recordings_of(ref, hyp)) {
    const SpeakerTimeline rtl = timeline_of(ref, rec);
    const SpeakerTimeline htl = timeline_of(hyp, rec);
    std::vector<const Intervals *> rsp, hsp;
    std::vector<std::string> rnames, hnames;
    for (const auto &[k, v] : rtl) {
      rnames.push_back(k);
      rsp.push_back(&v);
    }
    for (const auto &[k, v] : htl) {
      hnames.push_back(k);
      hsp.push_back(&v);
    }
    const Intervals zones = collar_zones(ref, rec, opts.collar_s);

    std::vector<std::int64_t> cuts;
    for (const auto *iv : rsp)
      for (const auto &x : *iv) cuts.insert(cuts.end(), {x.begin, x.end});
    for (const auto *iv : hsp)
      for (const auto &x : *iv) cuts.insert(cuts.end(), {x.begin, x.end});
    for (const auto &z : zones) cuts.insert(cuts.end(), {z.begin, z.end});
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    struct Region {
      std::int64_t dur;
      std::vector<int> r_on, h_on;
    };
    std::vector<Region> regions;
    Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(
        static_cast<Eigen::Index>(rsp.size()), static_cast<Eigen::Index>(hsp.size()));
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const std::int64_t a = cuts[k], b = cuts[k + 1];
      if (covers(zones, a)) continue;
      Region reg{b - a, {}, {}};
      for (std::size_t i = 0; i < rsp.size(); ++i)
        if (covers(*rsp[i], a)) reg.r_on.push_back(static_cast<int>(i));
      for (std::size_t j = 0; j < hsp.size(); ++j)
        if (covers(*hsp[j], a)) reg.h_on.push_back(static_cast<int>(j));
      if (!opts.score_overlap && reg.r_on.size() > 1) continue;
      rep.scored_region_ms += reg.dur;
      if (reg.r_on.empty() && reg.h_on.empty()) continue;
      for (int i : reg.r_on)
        for (int j : reg.h_on) joint(i, j) += static_cast<double>(reg.dur);
      regions.push_back(std::move(reg));
    }

    const std::vector<int> map = best_mapping(joint, opts.max_exhaustive_speakers);
    for (std::size_t i = 0; i < map.size(); ++i)
      if (map[i] >= 0) rep.mapping.push_back({rec, rnames[i], hnames[map[i]]});

    for (const auto &reg : regions) {
      const auto nr = static_cast<std::int64_t>(reg.r_on.size());
      const auto nh = static_cast<std::int64_t>(reg.h_on.size());
      std::int64_t correct = 0;
      for (int i : reg.r_on) {
        const int j = map[static_cast<std::size_t>(i)];
        if (j >= 0 && std::find(reg.h_on.begin(), reg.h_on.end(), j) != reg.h_on.end())
          ++correct;
      }
      rep.scored_ms += nr * reg.dur;
      rep.miss_ms += std::max<std::int64_t>(0, nr - nh) * reg.dur;
      rep.falarm_ms += std::max<std::int64_t>(0, nh - nr) * reg.dur;
      rep.confusion_ms += (std::min(nr, nh) - correct) * reg.dur;
    }
  }
  rep.miss_s = rep.miss_ms / 1000.0;
  rep.falarm_s = rep.falarm_ms / 1000.0;
  rep.confusion_s = rep.confusion_ms / 1000.0;
  rep.scored_speech_s = rep.scored_ms / 1000.0;
  if (rep.scored_ms <= 0)
    throw UndefinedDER("no scored reference speech; DER is undefined");
  rep.der = static_cast<double>(rep.miss_ms + rep.falarm_ms + rep.confusion_ms) /
            static_cast<double>(rep.scored_ms);
  return rep;
}

double jer(const std::vector<RttmSegment> &ref,
           const std::vector<RttmSegment> &hyp, int max_exhaustive_speakers) {
  double err_sum = 0.0;
  int n_ref = 0;
  for (const auto &rec : recordings_of(ref, hyp)) {
    const SpeakerTimeline rtl = timeline_of(ref, rec);
    const SpeakerTimeline htl = timeline_of(hyp, rec);
    std::vector<const Intervals *> rsp, hsp;
    for (const auto &[k, v] : rtl) rsp.push_back(&v);
    for (const auto &[k, v] : htl) hsp.push_back(&v);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(
        static_cast<Eigen::Index>(rsp.size()), static_cast<Eigen::Index>(hsp.size()));
    for (std::size_t i = 0; i < rsp.size(); ++i) {
      for (std::size_t j = 0; j < hsp.size(); ++j) {
        const auto inter = intersection(*rsp[i], *hsp[j]);
        const auto uni = total(*rsp[i]) + total(*hsp[j]) - inter;
        jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
      }
    }
    const std::vector<int> map = best_mapping(jac, max_exhaustive_speakers);
    for (std::size_t i = 0; i < rsp.size(); ++i) {
      const int j = map[i];
      err_sum += j >= 0 ? 1.0 - jac(static_cast<Eigen::Index>(i), j) : 1.0;
      ++n_ref;
    }
  }
  if (n_ref == 0) throw UndefinedDER("no reference speakers; JER is undefined");
  return err_sum / n_ref;
}

std::string format_report(const ScoreReport &r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "scored speech  " << r.scored_speech_s << " s\n"
      << "missed speech  " << r.miss_s << " s\n"
      << "false alarm    " << r.falarm_s << " s\n"
      << "confusion      " << r.confusion_s << " s\n"
      << "DER            " << 100.0 * r.der << "%\n";
  if (r.jer) out << "JER            " << 100.0 * *r.jer << "%\n";
  for (const auto &m : r.mapping)
    out << "map " << m.recording_id << ' ' << m.ref << " -> " << m.hyp << '\n';
  return out.str();
}

std::string format_report_csv(const ScoreReport &r) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "scored_speech_s,miss_s,falarm_s,confusion_s,der,jer\n"
      << r.scored_speech_s << ',' << r.miss_s << ',' << r.falarm_s << ','
      << r.confusion_s << ',' << r.der << ',';
  if (r.jer) out << *r.jer;
  out << '\n';
  return out.str();
}

}  // namespace eda::score
