#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ccr/detsim.hpp"
#include "ccr/synthdata.hpp"
#include "ccr/tensor.hpp"

namespace ccr {

struct RankedUnit {
  double score = 0.0;
  bool relevant = false;
  double weight = 1.0;  // 1 for frame units, track frame count for track units
};

// A per-class ranking. Units are stably sorted by score descending, so score
// ties keep their input order.
struct RankedRun {
  int class_index = 0;
  std::vector<RankedUnit> units;

  static RankedRun ranked(int class_index, std::vector<RankedUnit> units) {
    std::stable_sort(units.begin(), units.end(),
                     [](const RankedUnit& a, const RankedUnit& b) { return a.score > b.score; });
    return RankedRun{class_index, std::move(units)};
  }
};

// Non-interpolated weight-aware AP: walk the ranking and average the running
// precision at each relevant unit, precision measured in unit weight.
inline double average_precision(const RankedRun& run, double total_positive_weight) {
  if (!(total_positive_weight > 0.0)) {
    throw std::invalid_argument("average_precision: total positive weight must be > 0");
  }
  double cum_w = 0.0, cum_rel = 0.0, ap = 0.0;
  for (const auto& u : run.units) {
    cum_w += u.weight;
    if (u.relevant) {
      cum_rel += u.weight;
      ap += u.weight * (cum_rel / cum_w);
    }
  }
  return ap / total_positive_weight;
}

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

// One (recall, precision) point after each ranked unit.
inline std::vector<PrPoint> pr_curve(const RankedRun& run, double total_positive_weight) {
  if (!(total_positive_weight > 0.0)) {
    throw std::invalid_argument("pr_curve: total positive weight must be > 0");
  }
  std::vector<PrPoint> pts;
  pts.reserve(run.units.size());
  double cum_w = 0.0, cum_rel = 0.0;
  for (const auto& u : run.units) {
    cum_w += u.weight;
    if (u.relevant) cum_rel += u.weight;
    pts.push_back({cum_rel / total_positive_weight, cum_rel / cum_w});
  }
  return pts;
}

struct EvalReport {
  std::vector<double> per_class_ap;       // NaN marks classes with no positives
  std::vector<double> per_class_ceiling;  // max attainable recall per class
  double macro_ap = 0.0;
  double micro_ap = 0.0;
  double detector_recall = 1.0;           // 1.0 for frame-level methods
  double identification_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<PrPoint>> pr;   // per class
};

namespace detail {

inline EvalReport report_from_runs(const std::vector<std::vector<RankedUnit>>& per_class_units,
                                   const std::vector<double>& total_positive) {
  const int k = static_cast<int>(per_class_units.size());
  EvalReport rep;
  rep.per_class_ap.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
  rep.per_class_ceiling.assign(static_cast<std::size_t>(k), 0.0);
  rep.pr.resize(static_cast<std::size_t>(k));

  // Micro pooling: per-class runs concatenated class-major, then ranked once.
  std::vector<RankedUnit> pooled;
  double pooled_total = 0.0;
  double macro_sum = 0.0;
  int macro_n = 0;
  for (int c = 0; c < k; ++c) {
    if (total_positive[static_cast<std::size_t>(c)] > 0.0) {
      RankedRun run = RankedRun::ranked(c, per_class_units[static_cast<std::size_t>(c)]);
      double ap = average_precision(run, total_positive[static_cast<std::size_t>(c)]);
      rep.per_class_ap[static_cast<std::size_t>(c)] = ap;
      rep.pr[static_cast<std::size_t>(c)] = pr_curve(run, total_positive[static_cast<std::size_t>(c)]);
      if (!rep.pr[static_cast<std::size_t>(c)].empty()) {
        rep.per_class_ceiling[static_cast<std::size_t>(c)] = rep.pr[static_cast<std::size_t>(c)].back().recall;
      }
      macro_sum += ap;
      ++macro_n;
      pooled_total += total_positive[static_cast<std::size_t>(c)];
    }
    pooled.insert(pooled.end(), per_class_units[static_cast<std::size_t>(c)].begin(),
                  per_class_units[static_cast<std::size_t>(c)].end());
  }
  if (macro_n == 0) throw std::runtime_error("eval: no class has any positive instance");
  rep.macro_ap = macro_sum / macro_n;
  rep.micro_ap = average_precision(RankedRun::ranked(-1, std::move(pooled)), pooled_total);
  return rep;
}

}  // namespace detail

// Frames ranked per class by the frame-level classifier score; unit weight 1.
// Macro AP skips classes with no positives; micro AP pools all (frame, class)
// pairs into one ranking.
inline EvalReport frame_level_ap(const std::vector<Tensor>& scores,
                                 const std::vector<const FrameRecord*>& frames) {
  if (scores.size() != frames.size()) {
    throw std::invalid_argument("frame_level_ap: scores and frames differ in length");
  }
  if (frames.empty()) throw std::invalid_argument("frame_level_ap: no frames");
  const int k = static_cast<int>(frames.front()->y.size());
  std::vector<std::vector<RankedUnit>> units(static_cast<std::size_t>(k));
  std::vector<double> total(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    require_shape(scores[i], {k}, "frame_level_ap scores");
    for (int c = 0; c < k; ++c) {
      bool rel = frames[i]->y[static_cast<std::size_t>(c)] != 0;
      units[static_cast<std::size_t>(c)].push_back({scores[i][static_cast<std::size_t>(c)], rel, 1.0});
      if (rel) total[static_cast<std::size_t>(c)] += 1.0;
    }
  }
  EvalReport rep = detail::report_from_runs(units, total);
  rep.detector_recall = 1.0;
  return rep;
}

// Tracks ranked per class by their averaged score; a relevant track recalls
// all its frames (weight = track length), and the per-class denominator is
// the number of ground-truth frames where the identity is visible, NOT the
// detector-limited count - so recall tops out at the detector recall.
inline EvalReport track_level_ap(const std::vector<Track>& tracks,
                                 const std::vector<const FrameRecord*>& frames) {
  if (frames.empty()) throw std::invalid_argument("track_level_ap: no frames");
  const int k = static_cast<int>(frames.front()->y.size());
  std::set<std::int64_t> frame_ids;
  std::vector<double> total(static_cast<std::size_t>(k), 0.0);
  for (const auto* f : frames) {
    frame_ids.insert(f->frame_id);
    for (int c = 0; c < k; ++c)
      if (f->y[static_cast<std::size_t>(c)]) total[static_cast<std::size_t>(c)] += 1.0;
  }
  for (const auto& t : tracks) {
    for (const auto& d : t.members) {
      if (!frame_ids.count(d.frame_id)) {
        throw std::invalid_argument("track_level_ap: track " + std::to_string(t.track_id) +
                                    " references unknown frame " + std::to_string(d.frame_id));
      }
    }
  }
  std::vector<std::vector<RankedUnit>> units(static_cast<std::size_t>(k));
  for (const auto& t : tracks) {
    require_shape(t.scores, {k}, "track_level_ap track scores");
    for (int c = 0; c < k; ++c) {
      units[static_cast<std::size_t>(c)].push_back(
          {t.scores[static_cast<std::size_t>(c)], t.gt_identity == c, static_cast<double>(t.length())});
    }
  }
  return detail::report_from_runs(units, total);
}

// Fraction of visible (frame, identity) instances covered by a detection of
// that identity inside some track.
inline double detector_recall(const std::vector<Track>& tracks,
                              const std::vector<const FrameRecord*>& frames) {
  std::set<std::pair<std::int64_t, int>> covered;
  for (const auto& t : tracks)
    for (const auto& d : t.members)
      if (d.gt_identity >= 0) covered.insert({d.frame_id, d.gt_identity});
  long long total = 0, hit = 0;
  for (const auto* f : frames) {
    for (int c = 0; c < static_cast<int>(f->y.size()); ++c) {
      if (!f->y[static_cast<std::size_t>(c)]) continue;
      ++total;
      if (covered.count({f->frame_id, c})) ++hit;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

// Fraction of real-identity tracks whose argmax score matches their identity;
// false-positive-majority tracks are excluded from the denominator.
inline double identification_accuracy(const std::vector<Track>& tracks) {
  long long total = 0, hit = 0;
  for (const auto& t : tracks) {
    if (t.gt_identity < 0) continue;
    ++total;
    int arg = 0;
    for (int i = 1; i < t.scores.dim(0); ++i)
      if (t.scores[static_cast<std::size_t>(i)] > t.scores[static_cast<std::size_t>(arg)]) arg = i;
    if (arg == t.gt_identity) ++hit;
  }
  if (total == 0) throw std::runtime_error("identification_accuracy: no tracks");
  return static_cast<double>(hit) / static_cast<double>(total);
}

inline void write_pr_csv(const std::string& path, const std::vector<PrPoint>& points) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("pr_curve: cannot open for write: " + path);
  f << "rank,recall,precision\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    char line[96];
    std::snprintf(line, sizeof(line), "%zu,%.12g,%.12g\n", i + 1, points[i].recall, points[i].precision);
    f << line;
  }
}

}  // namespace ccr
