#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ccr/eval.hpp"
#include "ccr/rng.hpp"
#include "oracles.hpp"

using namespace ccr;

namespace {

FrameRecord frame(std::int64_t id, std::vector<int> y) {
  FrameRecord r;
  r.frame_id = id;
  r.split = "test";
  r.y = std::move(y);
  r.n = 0;
  for (int v : r.y) r.n += v;
  return r;
}

Track scored_track(int id, int gt, std::vector<std::pair<std::int64_t, int>> frames_ids,
                   std::vector<double> scores) {
  Track t;
  t.track_id = id;
  t.part = Part::kFace;
  t.gt_identity = gt;
  for (auto [f, det_id] : frames_ids) t.members.push_back({f, BBox{0, 0, 4, 4}, Part::kFace, det_id});
  const int k = static_cast<int>(scores.size());
  t.scores = Tensor({k}, std::move(scores));
  return t;
}

}  // namespace

TEST_CASE("average_precision: perfect ranking and the 0.8333 hand case") {
  RankedRun perfect = RankedRun::ranked(0, {{0.9, true, 1.0}, {0.8, true, 1.0}});
  CHECK(average_precision(perfect, 2.0) == doctest::Approx(1.0));

  RankedRun mixed = RankedRun::ranked(0, {{0.9, true, 1.0}, {0.8, false, 1.0}, {0.7, true, 1.0}});
  CHECK(average_precision(mixed, 2.0) == doctest::Approx(0.5 * (1.0 + 2.0 / 3.0)).epsilon(1e-15));

  CHECK_THROWS_AS(average_precision(mixed, 0.0), std::invalid_argument);
}

TEST_CASE("average_precision matches the brute-force walk oracle on 200 random runs") {
  Rng rng(31337);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 1 + rng.below_int(25);
    std::vector<RankedUnit> units;
    std::vector<oracle::ApUnit> oracle_units;
    double covered = 0.0;
    for (int i = 0; i < n; ++i) {
      // Coarse scores force plenty of ties to exercise the stable-order rule.
      double score = rng.below_int(5) / 4.0;
      bool rel = rng.bernoulli(0.4);
      double weight = rng.bernoulli(0.5) ? 1.0 : 1.0 + rng.below_int(5);
      units.push_back({score, rel, weight});
      oracle_units.push_back({score, rel, weight});
      if (rel) covered += weight;
    }
    double total = covered + (rng.bernoulli(0.3) ? 1.0 + rng.below_int(4) : 0.0);
    if (total <= 0.0) continue;
    double got = average_precision(RankedRun::ranked(0, units), total);
    double expect = oracle::ap_brute_force(oracle_units, total);
    CHECK(std::fabs(got - expect) < 1e-12);
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("pr_curve integrates back to the AP value and recall never decreases") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 1 + rng.below_int(20);
    std::vector<RankedUnit> units;
    double covered = 0.0;
    for (int i = 0; i < n; ++i) {
      bool rel = rng.bernoulli(0.5);
      double w = 1.0 + rng.below_int(3);
      units.push_back({rng.uniform(), rel, w});
      if (rel) covered += w;
    }
    double total = covered + 1.0;
    RankedRun run = RankedRun::ranked(0, units);
    auto pts = pr_curve(run, total);
    REQUIRE(pts.size() == run.units.size());
    double ap_from_curve = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) CHECK(pts[i].recall >= pts[i - 1].recall);
      if (run.units[i].relevant) ap_from_curve += run.units[i].weight * pts[i].precision;
    }
    ap_from_curve /= total;
    CHECK(std::fabs(ap_from_curve - average_precision(run, total)) < 1e-12);
  }
}

TEST_CASE("pr_curve pins precision at 1 until coverage runs out for a perfect ranking") {
  RankedRun run = RankedRun::ranked(0, {{0.9, true, 2.0}, {0.8, true, 3.0}, {0.1, false, 1.0}});
  auto pts = pr_curve(run, 10.0);
  CHECK(pts[0].precision == 1.0);
  CHECK(pts[1].precision == 1.0);
  CHECK(pts[1].recall == doctest::Approx(0.5));
  CHECK(pts[2].recall == doctest::Approx(0.5));  // coverage exhausted
  CHECK(pts[2].precision < 1.0);
}

TEST_CASE("frame_level_ap: oracle scores give AP 1 everywhere") {
  std::vector<FrameRecord> recs{frame(0, {1, 0}), frame(1, {0, 1}), frame(2, {1, 1}), frame(3, {0, 0})};
  std::vector<const FrameRecord*> ptrs;
  for (auto& r : recs) ptrs.push_back(&r);
  std::vector<Tensor> scores;
  for (auto& r : recs) {
    Tensor s({2});
    for (int c = 0; c < 2; ++c) s[c] = r.y[c] ? 1.0 : 0.0;
    scores.push_back(s);
  }
  EvalReport rep = frame_level_ap(scores, ptrs);
  CHECK(rep.per_class_ap[0] == doctest::Approx(1.0));
  CHECK(rep.per_class_ap[1] == doctest::Approx(1.0));
  CHECK(rep.macro_ap == doctest::Approx(1.0));
  CHECK(rep.micro_ap == doctest::Approx(1.0));
  CHECK(rep.detector_recall == 1.0);
}

TEST_CASE("frame_level_ap: constant scores with stable ties match the oracle exactly") {
  Rng rng(7);
  std::vector<FrameRecord> recs;
  for (int f = 0; f < 30; ++f) recs.push_back(frame(f, {rng.bernoulli(0.3) ? 1 : 0}));
  std::vector<const FrameRecord*> ptrs;
  for (auto& r : recs) ptrs.push_back(&r);
  std::vector<Tensor> scores(30, Tensor::full({1}, 0.5));
  int positives = 0;
  for (auto& r : recs) positives += r.y[0];
  REQUIRE(positives > 0);

  std::vector<oracle::ApUnit> units;
  for (auto& r : recs) units.push_back({0.5, r.y[0] != 0, 1.0});
  EvalReport rep = frame_level_ap(scores, ptrs);
  CHECK(std::fabs(rep.per_class_ap[0] - oracle::ap_brute_force(units, positives)) < 1e-12);
}

TEST_CASE("frame_level_ap: random scores match the brute-force oracle per class, K=3") {
  Rng rng(2028);
  std::vector<FrameRecord> recs;
  for (int f = 0; f < 50; ++f)
    recs.push_back(frame(f, {rng.bernoulli(0.4) ? 1 : 0, rng.bernoulli(0.3) ? 1 : 0, rng.bernoulli(0.2) ? 1 : 0}));
  recs[0].y = {1, 1, 1};  // ensure positives in every class
  std::vector<const FrameRecord*> ptrs;
  for (auto& r : recs) ptrs.push_back(&r);
  std::vector<Tensor> scores;
  for (int f = 0; f < 50; ++f) {
    Tensor s({3});
    for (int c = 0; c < 3; ++c) s[c] = rng.uniform();
    scores.push_back(s);
  }
  EvalReport rep = frame_level_ap(scores, ptrs);
  double macro = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<oracle::ApUnit> units;
    double total = 0.0;
    for (int f = 0; f < 50; ++f) {
      units.push_back({scores[f][c], recs[f].y[c] != 0, 1.0});
      total += recs[f].y[c];
    }
    double expect = oracle::ap_brute_force(units, total);
    CHECK(std::fabs(rep.per_class_ap[c] - expect) < 1e-12);
    macro += expect;
  }
  CHECK(std::fabs(rep.macro_ap - macro / 3.0) < 1e-12);

  // Single-class micro equals the per-class AP exactly.
  std::vector<Tensor> one_scores;
  std::vector<FrameRecord> one_recs;
  for (int f = 0; f < 50; ++f) {
    one_recs.push_back(frame(f, {recs[f].y[0]}));
    one_scores.push_back(Tensor({1}, {scores[f][0]}));
  }
  std::vector<const FrameRecord*> one_ptrs;
  for (auto& r : one_recs) one_ptrs.push_back(&r);
  EvalReport one = frame_level_ap(one_scores, one_ptrs);
  CHECK(one.micro_ap == doctest::Approx(one.per_class_ap[0]).epsilon(1e-15));
}

TEST_CASE("track_level_ap: perfect tracks with full coverage give AP 1") {
  std::vector<FrameRecord> recs{frame(0, {1, 0}), frame(1, {1, 0}), frame(2, {1, 0}),
                                frame(3, {0, 1}), frame(4, {0, 1}), frame(5, {0, 1})};
  std::vector<const FrameRecord*> ptrs;
  for (auto& r : recs) ptrs.push_back(&r);
  std::vector<Track> tracks{
      scored_track(0, 0, {{0, 0}, {1, 0}, {2, 0}}, {1.0, 0.0}),
      scored_track(1, 1, {{3, 1}, {4, 1}, {5, 1}}, {0.0, 1.0}),
  };
  EvalReport rep = track_level_ap(tracks, ptrs);
  CHECK(rep.per_class_ap[0] == doctest::Approx(1.0));
  CHECK(rep.per_class_ap[1] == doctest::Approx(1.0));
  CHECK(rep.micro_ap == doctest::Approx(1.0));
}

TEST_CASE("track_level_ap: recall plateaus at detector coverage and caps AP") {
  // Identity 0 visible in 10 frames, but tracks only cover 4 of them.
  std::vector<FrameRecord> recs;
  for (int f = 0; f < 10; ++f) recs.push_back(frame(f, {1}));
  std::vector<const FrameRecord*> ptrs;
  for (auto& r : recs) ptrs.push_back(&r);
  std::vector<Track> tracks{scored_track(0, 0, {{0, 0}, {1, 0}, {2, 0}, {3, 0}}, {1.0})};
  EvalReport rep = track_level_ap(tracks, ptrs);
  CHECK(rep.per_class_ap[0] == doctest::Approx(0.4));
  CHECK(rep.per_class_ceiling[0] == doctest::Approx(0.4));
  CHECK(rep.pr[0].back().recall == doctest::Approx(0.4));
  CHECK(rep.pr[0].back().precision == doctest::Approx(1.0));
}

TEST_CASE("track_level_ap: long wrong tracks hurt precision by their frame weight") {
  std::vector<FrameRecord> recs;
  for (int f = 0; f < 8; ++f) recs.push_back(frame(f, {1, f >= 4 ? 1 : 0}));
  std::vector<const FrameRecord*> ptrs;
  for (auto& r : recs) ptrs.push_back(&r);
  // A wrong 4-frame track of identity 1 outranks the right one for class 0.
  std::vector<Track> tracks{
      scored_track(0, 1, {{4, 1}, {5, 1}, {6, 1}, {7, 1}}, {0.9, 0.5}),
      scored_track(1, 0, {{0, 0}, {1, 0}, {2, 0}, {3, 0}}, {0.8, 0.1}),
  };
  EvalReport rep = track_level_ap(tracks, ptrs);
  // Class 0: first unit wrong (weight 4), then right (weight 4): precision at
  // the relevant unit is 4/8, coverage 4/8 -> AP = (4 * 0.5) / 8 = 0.25.
  CHECK(rep.per_class_ap[0] == doctest::Approx(0.25));

  // With every track of length 1 and full coverage, track AP equals frame AP.
  std::vector<FrameRecord> recs1{frame(0, {1}), frame(1, {0}), frame(2, {1})};
  std::vector<const FrameRecord*> ptrs1;
  for (auto& r : recs1) ptrs1.push_back(&r);
  std::vector<Track> singles{
      scored_track(0, 0, {{0, 0}}, {0.7}),
      scored_track(1, -1, {{1, -1}}, {0.9}),
      scored_track(2, 0, {{2, 0}}, {0.4}),
  };
  EvalReport tr = track_level_ap(singles, ptrs1);
  std::vector<Tensor> fscores{Tensor({1}, {0.7}), Tensor({1}, {0.9}), Tensor({1}, {0.4})};
  EvalReport fr = frame_level_ap(fscores, ptrs1);
  CHECK(tr.per_class_ap[0] == doctest::Approx(fr.per_class_ap[0]).epsilon(1e-15));

  Track bad = scored_track(9, 0, {{99, 0}}, {0.5});
  CHECK_THROWS_AS(track_level_ap({bad}, ptrs1), std::invalid_argument);
}

TEST_CASE("track_level_ap random instances match the oracle") {
  Rng rng(515);
  for (int trial = 0; trial < 30; ++trial) {
    int frames_n = 20;
    std::vector<FrameRecord> recs;
    for (int f = 0; f < frames_n; ++f)
      recs.push_back(frame(f, {rng.bernoulli(0.5) ? 1 : 0, rng.bernoulli(0.4) ? 1 : 0}));
    recs[0].y = {1, 1};
    std::vector<const FrameRecord*> ptrs;
    for (auto& r : recs) ptrs.push_back(&r);
    std::vector<Track> tracks;
    int next_frame = 0;
    for (int t = 0; t < 5 && next_frame + 3 <= frames_n; ++t) {
      int len = 1 + rng.below_int(3);
      std::vector<std::pair<std::int64_t, int>> ms;
      for (int j = 0; j < len; ++j) ms.push_back({next_frame++, 0});
      tracks.push_back(scored_track(t, rng.below_int(3) - 1, ms, {rng.uniform(), rng.uniform()}));
    }
    if (tracks.empty()) continue;
    EvalReport rep = track_level_ap(tracks, ptrs);
    for (int c = 0; c < 2; ++c) {
      std::vector<oracle::ApUnit> units;
      double total = 0.0;
      for (auto& r : recs) total += r.y[c];
      for (auto& t : tracks) units.push_back({t.scores[c], t.gt_identity == c, static_cast<double>(t.length())});
      CHECK(std::fabs(rep.per_class_ap[c] - oracle::ap_brute_force(units, total)) < 1e-12);
    }
  }
}

TEST_CASE("detector_recall: oracle coverage, partial coverage, no tracks") {
  std::vector<FrameRecord> recs{frame(0, {1, 1}), frame(1, {1, 0})};
  std::vector<const FrameRecord*> ptrs;
  for (auto& r : recs) ptrs.push_back(&r);

  std::vector<Track> full{scored_track(0, 0, {{0, 0}, {1, 0}}, {1.0, 0.0}),
                          scored_track(1, 1, {{0, 1}}, {0.0, 1.0})};
  CHECK(detector_recall(full, ptrs) == doctest::Approx(1.0));

  std::vector<Track> partial{scored_track(0, 0, {{0, 0}}, {1.0, 0.0})};
  CHECK(detector_recall(partial, ptrs) == doctest::Approx(1.0 / 3.0));

  CHECK(detector_recall({}, ptrs) == 0.0);
}

TEST_CASE("identification_accuracy: correct argmax, tie rule, empty error") {
  std::vector<Track> tracks{
      scored_track(0, 1, {{0, 1}}, {0.2, 0.7, 0.1}),
      scored_track(1, 0, {{1, 0}}, {0.5, 0.5, 0.0}),   // tie -> class 0, correct
      scored_track(2, 2, {{2, 2}}, {0.4, 0.4, 0.2}),   // tie -> class 0, wrong
      scored_track(3, -1, {{3, -1}}, {1.0, 0.0, 0.0}), // fp excluded
  };
  CHECK(identification_accuracy(tracks) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(identification_accuracy({}), std::runtime_error);
  std::vector<Track> only_fp{scored_track(0, -1, {{0, -1}}, {1.0})};
  CHECK_THROWS_AS(identification_accuracy(only_fp), std::runtime_error);
}
