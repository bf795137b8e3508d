#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "ccr/losses.hpp"
#include "ccr/model.hpp"
#include "ccr/proposal.hpp"
#include "ccr/rng.hpp"
#include "ccr/synthdata.hpp"

namespace ccr {

enum class Part { kFace, kBody };

inline const char* part_name(Part p) { return p == Part::kFace ? "face" : "body"; }
inline Part part_from_name(const std::string& s) {
  if (s == "face") return Part::kFace;
  if (s == "body") return Part::kBody;
  throw std::runtime_error("unknown part: " + s);
}

// The two effects behind track recall, as separate knobs: whether the part is
// visible at all comes from the ground truth flags, whether a visible part is
// found comes from p_detect plus box jitter and false positives.
struct DetectorProfile {
  Part part = Part::kFace;
  double p_detect = 0.95;     // per frame, given the part is visible
  double jitter_sigma = 0.05; // box noise, fraction of the box side
  double fp_rate = 0.05;      // Poisson false positives per frame
  std::uint64_t seed = 0;
};

struct Detection {
  std::int64_t frame_id = 0;
  BBox box;
  Part part = Part::kFace;
  int gt_identity = -1;  // -1 for false positives
};

struct Track {
  int track_id = 0;
  Part part = Part::kFace;
  std::vector<Detection> members;  // strictly consecutive frame_ids
  int gt_identity = -1;            // majority over members
  Tensor scores;                   // filled by score_track

  int length() const { return static_cast<int>(members.size()); }
};

inline double iou(const BBox& a, const BBox& b) {
  long long ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
  long long ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
  long long iw = ix1 - ix0, ih = iy1 - iy0;
  if (iw <= 0 || ih <= 0) return 0.0;
  double inter = static_cast<double>(iw) * static_cast<double>(ih);
  double uni = static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter;
  return inter / uni;
}

// One detection per visible ground-truth part box with probability p_detect,
// Gaussian box jitter, plus Poisson false positives; every frame draws from
// its own RNG stream, so the output is independent of scheduling.
inline std::vector<Detection> simulate_detections(const std::vector<FrameRecord>& frames,
                                                  const DetectorProfile& profile, int image_side) {
  std::vector<Detection> out;
  for (const auto& rec : frames) {
    Rng rng = Rng::stream(profile.seed, {0xDE7ull, static_cast<std::uint64_t>(rec.frame_id),
                                         static_cast<std::uint64_t>(profile.part == Part::kFace ? 1 : 2)});
    const auto& boxes = profile.part == Part::kFace ? rec.face_boxes : rec.body_boxes;
    for (const auto& gt : boxes) {
      if (!gt.visible) continue;
      if (!rng.bernoulli(profile.p_detect)) continue;
      Detection d;
      d.frame_id = rec.frame_id;
      d.part = profile.part;
      d.gt_identity = gt.id;
      double sx = profile.jitter_sigma * (gt.x1 - gt.x0);
      double sy = profile.jitter_sigma * (gt.y1 - gt.y0);
      int x0 = static_cast<int>(std::lround(gt.x0 + rng.normal(0, sx)));
      int x1 = static_cast<int>(std::lround(gt.x1 + rng.normal(0, sx)));
      int y0 = static_cast<int>(std::lround(gt.y0 + rng.normal(0, sy)));
      int y1 = static_cast<int>(std::lround(gt.y1 + rng.normal(0, sy)));
      x0 = std::max(0, std::min(x0, image_side - 2));
      y0 = std::max(0, std::min(y0, image_side - 2));
      d.box = BBox{x0, y0, std::max(x0 + 1, std::min(x1, image_side)),
                   std::max(y0 + 1, std::min(y1, image_side))};
      out.push_back(d);
    }
    int nfp = rng.poisson(profile.fp_rate);
    for (int f = 0; f < nfp; ++f) {
      Detection d;
      d.frame_id = rec.frame_id;
      d.part = profile.part;
      d.gt_identity = -1;
      int w = 8 + rng.below_int(std::max(1, image_side / 4));
      int h = 8 + rng.below_int(std::max(1, image_side / 4));
      int x0 = rng.below_int(std::max(1, image_side - w));
      int y0 = rng.below_int(std::max(1, image_side - h));
      d.box = BBox{x0, y0, std::min(x0 + w, image_side), std::min(y0 + h, image_side)};
      out.push_back(d);
    }
  }
  return out;
}

// Greedy frame-to-frame linking: per frame pair, candidate matches are sorted
// by IoU descending (ties by lower track id, then detection order) and taken
// greedily at IoU >= threshold. Unmatched detections open new tracks; tracks
// shorter than min_track_len are dropped.
inline std::vector<Track> link_tracks(const std::vector<Detection>& detections,
                                      double iou_threshold = 0.5, int min_track_len = 3) {
  std::map<std::int64_t, std::vector<Detection>> by_frame;
  for (const auto& d : detections) by_frame[d.frame_id].push_back(d);

  struct Open {
    Track track;
    std::int64_t last_frame = 0;
  };
  std::vector<Open> open;
  std::vector<Track> done;
  int next_id = 0;

  auto finish = [&](Open& o) {
    if (o.track.length() >= min_track_len) done.push_back(std::move(o.track));
  };

  for (auto& [frame_id, dets] : by_frame) {
    // Retire tracks that did not continue into the previous frame.
    std::vector<Open> still;
    for (auto& o : open) {
      if (o.last_frame == frame_id - 1) still.push_back(std::move(o));
      else finish(o);
    }
    open = std::move(still);

    struct Cand {
      double overlap;
      std::size_t track;
      std::size_t det;
    };
    std::vector<Cand> cands;
    for (std::size_t t = 0; t < open.size(); ++t)
      for (std::size_t d = 0; d < dets.size(); ++d) {
        double ov = iou(open[t].track.members.back().box, dets[d].box);
        if (ov >= iou_threshold) cands.push_back({ov, t, d});
      }
    std::stable_sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
      if (a.overlap != b.overlap) return a.overlap > b.overlap;
      if (open[a.track].track.track_id != open[b.track].track.track_id)
        return open[a.track].track.track_id < open[b.track].track.track_id;
      return a.det < b.det;
    });
    std::vector<bool> track_used(open.size(), false), det_used(dets.size(), false);
    for (const auto& c : cands) {
      if (track_used[c.track] || det_used[c.det]) continue;
      track_used[c.track] = true;
      det_used[c.det] = true;
      open[c.track].track.members.push_back(dets[c.det]);
      open[c.track].last_frame = frame_id;
    }
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (det_used[d]) continue;
      Open o;
      o.track.track_id = next_id++;
      o.track.part = dets[d].part;
      o.track.members.push_back(dets[d]);
      o.last_frame = frame_id;
      open.push_back(std::move(o));
    }
  }
  for (auto& o : open) finish(o);

  std::stable_sort(done.begin(), done.end(),
                   [](const Track& a, const Track& b) { return a.track_id < b.track_id; });

  for (auto& t : done) {
    // Majority ground-truth identity; ties prefer the lowest real identity,
    // and false positives only win when nothing real is present.
    std::map<int, int> votes;
    for (const auto& d : t.members) ++votes[d.gt_identity];
    int best = -1, best_votes = -1;
    for (const auto& [id, v] : votes) {
      if (id < 0) continue;
      if (v > best_votes) { best = id; best_votes = v; }
    }
    int fp_votes = votes.count(-1) ? votes[-1] : 0;
    t.gt_identity = (best_votes >= fp_votes && best >= 0) ? best : -1;
  }
  return done;
}

// Mean of per-crop softmax vectors over the track members; sums to one.
inline Tensor score_track(const CamNet& classifier, const Track& track,
                          const std::function<const Tensor&(std::int64_t)>& frame_image) {
  if (classifier.head_kind() != HeadKind::kSingleLabelIdentity) {
    throw std::logic_error("score_track: classifier head is not single-label");
  }
  if (track.members.empty()) throw std::invalid_argument("score_track: empty track");
  const int k = classifier.num_classes();
  Tensor mean({k});
  for (const auto& d : track.members) {
    const Tensor& img = frame_image(d.frame_id);
    Tensor crop = crop_resize(img, d.box, classifier.config().input_side);
    CamNet::Activations a = classifier.forward(crop);
    Tensor p = softmax(a.logits);
    for (int i = 0; i < k; ++i) mean[static_cast<std::size_t>(i)] += p[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < k; ++i) mean[static_cast<std::size_t>(i)] /= track.length();
  return mean;
}

inline nlohmann::ordered_json detection_to_json(const Detection& d) {
  nlohmann::ordered_json j;
  j["frame_id"] = d.frame_id;
  j["part"] = part_name(d.part);
  j["x0"] = d.box.x0;
  j["y0"] = d.box.y0;
  j["x1"] = d.box.x1;
  j["y1"] = d.box.y1;
  j["gt_identity"] = d.gt_identity;
  return j;
}

inline nlohmann::ordered_json track_to_json(const Track& t) {
  nlohmann::ordered_json j;
  j["track_id"] = t.track_id;
  j["part"] = part_name(t.part);
  j["gt_identity"] = t.gt_identity;
  nlohmann::ordered_json members = nlohmann::ordered_json::array();
  for (const auto& d : t.members) members.push_back(detection_to_json(d));
  j["members"] = members;
  if (!t.scores.empty()) {
    std::vector<double> s(t.scores.data(), t.scores.data() + t.scores.size());
    j["scores"] = s;
  }
  return j;
}

template <typename T, typename Fn>
void write_jsonl(const std::string& path, const std::vector<T>& items, Fn&& to_json) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("jsonl: cannot open for write: " + path);
  for (const auto& item : items) f << to_json(item).dump() << "\n";
  if (!f) throw std::runtime_error("jsonl: write failed: " + path);
}

}  // namespace ccr
