#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <list>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ccr/detsim.hpp"
#include "ccr/eval.hpp"
#include "ccr/image.hpp"
#include "ccr/model.hpp"
#include "ccr/proposal.hpp"
#include "ccr/synthdata.hpp"
#include "ccr/train.hpp"
#include "ccr/version.hpp"

namespace ccr {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& w) : std::runtime_error(w) {}
};
struct PrereqError : std::runtime_error {
  explicit PrereqError(const std::string& w) : std::runtime_error(w) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& w) : std::runtime_error(w) {}
};

struct TrackingConfig {
  double iou_threshold = 0.5;
  int min_track_len = 3;
};

// One JSON config drives every command; per-stage seeds are derived from the
// single global seed so a config plus the code version pins every artifact.
struct PipelineConfig {
  std::string dataset_dir = "data/benchmark";
  std::string checkpoint_dir = "checkpoints";
  std::string report_dir = "report";
  int threads = 2;
  double threshold = 0.5;
  std::uint64_t seed = 4202;
  SceneConfig scene;
  ModelConfig model;  // num_classes filled per stage
  TrainConfig train_count;
  TrainConfig train_recog;
  TrainConfig train_track;
  DetectorProfile detector_face{Part::kFace, 0.95};
  DetectorProfile detector_body{Part::kBody, 0.90};
  TrackingConfig tracking;

  enum SeedStream : std::uint64_t {
    kSeedScene = 1,
    kSeedTrainCount = 2,
    kSeedTrainRecog = 3,
    kSeedTrainTrackFace = 4,
    kSeedTrainTrackBody = 5,
    kSeedDetectorFace = 6,
    kSeedDetectorBody = 7,
    kSeedRandomMethod = 8,
    kSeedModelCount = 10,
    kSeedModelRecog = 11,
    kSeedModelFace = 13,
    kSeedModelBody = 14,
  };

  std::uint64_t derived_seed(SeedStream which) const {
    return Rng::stream(seed, {static_cast<std::uint64_t>(which)}).next_u64();
  }

  void resolve_seeds() {
    scene.master_seed = derived_seed(kSeedScene);
    train_count.seed = derived_seed(kSeedTrainCount);
    train_recog.seed = derived_seed(kSeedTrainRecog);
    train_track.seed = derived_seed(kSeedTrainTrackFace);
    detector_face.seed = derived_seed(kSeedDetectorFace);
    detector_body.seed = derived_seed(kSeedDetectorBody);
    detector_face.part = Part::kFace;
    detector_body.part = Part::kBody;
  }

  void validate() const {
    if (threshold < 0.0 || threshold > 1.0) throw ConfigError("threshold T must be in [0,1]");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (scene.image_side < 4 * model.input_side) {
      throw ConfigError("scene.image_side must be at least 4x model.input_side so crops gain resolution");
    }
    if (dataset_dir == checkpoint_dir || dataset_dir == report_dir || checkpoint_dir == report_dir) {
      throw ConfigError("dataset, checkpoint and report paths must be distinct");
    }
    for (double p : {scene.face_visibility, scene.body_visibility, scene.occlusion_prob,
                     detector_face.p_detect, detector_body.p_detect}) {
      if (p < 0.0 || p > 1.0) throw ConfigError("probabilities must be in [0,1]");
    }
    for (const TrainConfig* t : {&train_count, &train_recog, &train_track}) {
      if (t->batch_size < 1) throw ConfigError("batch size must be >= 1");
      if (t->count_bin_cap < 1) throw ConfigError("count bin cap N must be >= 1");
      if (t->epochs < 0) throw ConfigError("epochs must be >= 0");
    }
    if (scene.count_distribution.size() != static_cast<std::size_t>(scene.max_individuals) + 1) {
      throw ConfigError("count_distribution needs max_individuals+1 entries");
    }
  }

  static PipelineConfig from_json(const nlohmann::json& j) {
    PipelineConfig c;
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.dataset_dir = p.value("dataset_dir", c.dataset_dir);
      c.checkpoint_dir = p.value("checkpoint_dir", c.checkpoint_dir);
      c.report_dir = p.value("report_dir", c.report_dir);
    }
    c.threads = j.value("threads", c.threads);
    c.threshold = j.value("threshold", c.threshold);
    c.seed = j.value("seed", c.seed);
    if (j.contains("scene")) {
      const auto& s = j.at("scene");
      c.scene.num_identities = s.value("num_identities", c.scene.num_identities);
      c.scene.train_frames = s.value("train_frames", c.scene.train_frames);
      c.scene.test_frames = s.value("test_frames", c.scene.test_frames);
      c.scene.image_side = s.value("image_side", c.scene.image_side);
      c.scene.max_individuals = s.value("max_individuals", c.scene.max_individuals);
      c.scene.count_distribution = s.value("count_distribution", c.scene.count_distribution);
      c.scene.face_visibility = s.value("face_visibility", c.scene.face_visibility);
      c.scene.body_visibility = s.value("body_visibility", c.scene.body_visibility);
      c.scene.occlusion_prob = s.value("occlusion_prob", c.scene.occlusion_prob);
      c.scene.clutter_density = s.value("clutter_density", c.scene.clutter_density);
      c.scene.burst_len = s.value("burst_len", c.scene.burst_len);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.model.input_side = m.value("input_side", c.model.input_side);
      c.model.channels = m.value("channels", c.model.channels);
    }
    auto read_train = [](const nlohmann::json& t, TrainConfig& out) {
      out.epochs = t.value("epochs", out.epochs);
      out.batch_size = t.value("batch_size", out.batch_size);
      out.learning_rate = t.value("learning_rate", out.learning_rate);
      out.momentum = t.value("momentum", out.momentum);
      out.count_bin_cap = t.value("count_bin_cap", out.count_bin_cap);
      if (t.contains("augment")) {
        const auto& a = t.at("augment");
        out.augment.flip_prob = a.value("flip_prob", out.augment.flip_prob);
        out.augment.color_jitter = a.value("color_jitter", out.augment.color_jitter);
        out.augment.neg_crop_min = a.value("neg_crop_min", out.augment.neg_crop_min);
        out.augment.neg_crop_max = a.value("neg_crop_max", out.augment.neg_crop_max);
      }
    };
    if (j.contains("train_count")) read_train(j.at("train_count"), c.train_count);
    if (j.contains("train_recog")) read_train(j.at("train_recog"), c.train_recog);
    if (j.contains("train_track")) read_train(j.at("train_track"), c.train_track);
    auto read_detector = [](const nlohmann::json& d, DetectorProfile& out) {
      out.p_detect = d.value("p_detect", out.p_detect);
      out.jitter_sigma = d.value("jitter_sigma", out.jitter_sigma);
      out.fp_rate = d.value("fp_rate", out.fp_rate);
    };
    if (j.contains("detector_face")) read_detector(j.at("detector_face"), c.detector_face);
    if (j.contains("detector_body")) read_detector(j.at("detector_body"), c.detector_body);
    if (j.contains("tracking")) {
      c.tracking.iou_threshold = j.at("tracking").value("iou_threshold", c.tracking.iou_threshold);
      c.tracking.min_track_len = j.at("tracking").value("min_track_len", c.tracking.min_track_len);
    }
    c.resolve_seeds();
    c.validate();
    return c;
  }

  static PipelineConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const std::exception& e) {
      throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return from_json(j);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["paths"] = {{"dataset_dir", dataset_dir}, {"checkpoint_dir", checkpoint_dir}, {"report_dir", report_dir}};
    j["threads"] = threads;
    j["threshold"] = threshold;
    j["seed"] = seed;
    j["scene"] = {{"num_identities", scene.num_identities}, {"train_frames", scene.train_frames},
                  {"test_frames", scene.test_frames}, {"image_side", scene.image_side},
                  {"max_individuals", scene.max_individuals},
                  {"count_distribution", scene.count_distribution},
                  {"face_visibility", scene.face_visibility}, {"body_visibility", scene.body_visibility},
                  {"occlusion_prob", scene.occlusion_prob}, {"clutter_density", scene.clutter_density},
                  {"burst_len", scene.burst_len}, {"master_seed", scene.master_seed}};
    j["model"] = {{"input_side", model.input_side}, {"channels", model.channels}};
    auto train_json = [](const TrainConfig& t) {
      return nlohmann::ordered_json{{"epochs", t.epochs}, {"batch_size", t.batch_size},
                                    {"learning_rate", t.learning_rate}, {"momentum", t.momentum},
                                    {"count_bin_cap", t.count_bin_cap}, {"seed", t.seed},
                                    {"augment",
                                     {{"flip_prob", t.augment.flip_prob},
                                      {"color_jitter", t.augment.color_jitter},
                                      {"neg_crop_min", t.augment.neg_crop_min},
                                      {"neg_crop_max", t.augment.neg_crop_max}}}};
    };
    j["train_count"] = train_json(train_count);
    j["train_recog"] = train_json(train_recog);
    j["train_track"] = train_json(train_track);
    auto det_json = [](const DetectorProfile& d) {
      return nlohmann::ordered_json{{"part", part_name(d.part)}, {"p_detect", d.p_detect},
                                    {"jitter_sigma", d.jitter_sigma}, {"fp_rate", d.fp_rate},
                                    {"seed", d.seed}};
    };
    j["detector_face"] = det_json(detector_face);
    j["detector_body"] = det_json(detector_body);
    j["tracking"] = {{"iou_threshold", tracking.iou_threshold}, {"min_track_len", tracking.min_track_len}};
    return j;
  }
};

namespace viz {

inline Rgb jet(double v) {
  v = std::max(0.0, std::min(1.0, v));
  auto seg = [&](double lo, double hi) { return std::max(0.0, std::min(1.0, (v - lo) / (hi - lo))); };
  return {seg(0.35, 0.65), v < 0.5 ? seg(0.0, 0.35) : 1.0 - seg(0.65, 1.0), 1.0 - seg(0.35, 0.65)};
}

inline void draw_box(Tensor& img, const BBox& box, const Rgb& color, int thickness = 2) {
  const int h = img.dim(1), w = img.dim(2);
  auto put = [&](int y, int x) {
    if (y < 0 || y >= h || x < 0 || x >= w) return;
    for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
  };
  for (int t = 0; t < thickness; ++t) {
    for (int x = box.x0; x < box.x1; ++x) {
      put(box.y0 + t, x);
      put(box.y1 - 1 - t, x);
    }
    for (int y = box.y0; y < box.y1; ++y) {
      put(y, box.x0 + t);
      put(y, box.x1 - 1 - t);
    }
  }
}

inline void draw_cross(Tensor& img, int cx, int cy, const Rgb& color, int arm = 5) {
  const int h = img.dim(1), w = img.dim(2);
  for (int d = -arm; d <= arm; ++d) {
    if (cy >= 0 && cy < h && cx + d >= 0 && cx + d < w)
      for (int c = 0; c < 3; ++c) img.at(c, cy, cx + d) = color[c];
    if (cy + d >= 0 && cy + d < h && cx >= 0 && cx < w)
      for (int c = 0; c < 3; ++c) img.at(c, cy + d, cx) = color[c];
  }
}

inline Tensor hstack3(const Tensor& a, const Tensor& b, const Tensor& c) {
  const int h = a.dim(1), w = a.dim(2);
  Tensor out({3, h, 3 * w + 8});
  out.fill(1.0);
  auto blit = [&](const Tensor& src, int x0) {
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(ch, y, x0 + x) = src.at(ch, y, x);
  };
  blit(a, 0);
  blit(b, w + 4);
  blit(c, 2 * w + 8);
  return out;
}

}  // namespace viz

struct ProposalRecord {
  std::int64_t frame_id = 0;
  int n_hat = 0;
  BBox box;
  std::string cam_path;
};

inline nlohmann::ordered_json proposal_to_json(const ProposalRecord& p) {
  nlohmann::ordered_json j;
  j["frame_id"] = p.frame_id;
  j["n_hat"] = p.n_hat;
  j["bbox"] = {p.box.x0, p.box.y0, p.box.x1, p.box.y1};
  j["cam_path"] = p.cam_path;
  return j;
}

inline ProposalRecord proposal_from_json(const nlohmann::json& j) {
  ProposalRecord p;
  p.frame_id = j.at("frame_id").get<std::int64_t>();
  p.n_hat = j.at("n_hat").get<int>();
  auto b = j.at("bbox");
  p.box = BBox{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
  p.cam_path = j.at("cam_path").get<std::string>();
  return p;
}

// Small LRU of decoded frames for track scoring, where members of one burst
// hit the same files repeatedly.
class FrameCache {
 public:
  FrameCache(std::filesystem::path root, const std::vector<FrameRecord>& records, std::size_t capacity = 24)
      : root_(std::move(root)), capacity_(capacity) {
    for (const auto& r : records) paths_[r.frame_id] = r.path;
  }

  const Tensor& get(std::int64_t frame_id) {
    auto hit = where_.find(frame_id);
    if (hit != where_.end()) {
      lru_.splice(lru_.begin(), lru_, hit->second);
      return hit->second->second;
    }
    auto path_it = paths_.find(frame_id);
    if (path_it == paths_.end()) throw PrereqError("frame " + std::to_string(frame_id) + " not in manifest");
    lru_.emplace_front(frame_id, read_ppm((root_ / path_it->second).string()));
    where_[frame_id] = lru_.begin();
    if (lru_.size() > capacity_) {
      where_.erase(lru_.back().first);
      lru_.pop_back();
    }
    return lru_.front().second;
  }

 private:
  std::filesystem::path root_;
  std::size_t capacity_;
  std::map<std::int64_t, std::string> paths_;
  std::list<std::pair<std::int64_t, Tensor>> lru_;
  std::map<std::int64_t, std::list<std::pair<std::int64_t, Tensor>>::iterator> where_;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const PipelineConfig& config() const { return cfg_; }

  // ---- artifact paths ----
  std::filesystem::path manifest_path() const { return fs(cfg_.dataset_dir) / "manifest.jsonl"; }
  std::filesystem::path count_ckpt() const { return fs(cfg_.checkpoint_dir) / "count.ckpt"; }
  std::filesystem::path recog_ckpt(const std::string& mode) const {
    return fs(cfg_.checkpoint_dir) / ("recog_" + mode + ".ckpt");
  }
  std::filesystem::path track_ckpt(Part part) const {
    return fs(cfg_.checkpoint_dir) / (std::string(part_name(part)) + ".ckpt");
  }
  std::filesystem::path proposals_path() const { return fs(cfg_.dataset_dir) / "proposals.jsonl"; }
  std::filesystem::path cams_dir() const { return fs(cfg_.dataset_dir) / "cams"; }
  std::filesystem::path report_path() const { return fs(cfg_.report_dir) / "report.json"; }
  std::filesystem::path localisations_path() const { return fs(cfg_.report_dir) / "localisations.jsonl"; }
  std::filesystem::path viz_dir() const { return fs(cfg_.report_dir) / "viz"; }

  // ---- gen ----
  DatasetSummary run_gen(bool force) {
    if (std::filesystem::exists(manifest_path()) && !force) {
      throw IoError("dataset exists at " + cfg_.dataset_dir + "; use --force to regenerate");
    }
    try {
      return generate_dataset(cfg_.scene, cfg_.dataset_dir, cfg_.threads);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

  // ---- train-count ----
  TrainHistory run_train_count() {
    auto records = need_manifest();
    const int bins = cfg_.train_count.count_bin_cap;
    ModelConfig mc = cfg_.model;
    mc.num_classes = bins + 1;
    mc.seed = cfg_.derived_seed(PipelineConfig::kSeedModelCount);
    CamNet net(mc, HeadKind::kCount);

    std::vector<const FrameRecord*> train = split_of(records, "train");
    std::vector<CountSample> samples(train.size());
    parallel_for(train.size(), cfg_.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        Tensor img = load_image(*train[i]);
        samples[i].image = resize_bilinear(img, mc.input_side, mc.input_side);
        samples[i].label = count_label(train[i]->y, bins);
        samples[i].negative = train[i]->n == 0;
      }
    });

    TrainHistory hist = train_counting(net, samples, cfg_.train_count, cfg_.threads);
    std::filesystem::create_directories(cfg_.checkpoint_dir);
    save_checkpoint(count_ckpt().string(), net.to_checkpoint());
    hist.write_csv((fs(cfg_.checkpoint_dir) / "count_history.csv").string());
    return hist;
  }

  // ---- propose ----
  std::vector<ProposalRecord> run_propose() {
    auto records = need_manifest();
    CamNet net = load_net(count_ckpt(), "count checkpoint (run train-count first)");
    std::filesystem::create_directories(cams_dir());

    std::vector<ProposalRecord> out(records.size());
    parallel_for(records.size(), cfg_.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        Tensor img = load_image(records[i]);
        Proposal p = propose_region(net, img, cfg_.threshold);
        char name[64];
        std::snprintf(name, sizeof(name), "cams/%lld_cam_n%d.pgm",
                      static_cast<long long>(records[i].frame_id), p.n_hat);
        write_pgm((fs(cfg_.dataset_dir) / name).string(), normalize_cam(p.cam));
        out[i] = ProposalRecord{records[i].frame_id, p.n_hat, p.box, name};
      }
    });
    write_jsonl(proposals_path().string(), out, proposal_to_json);
    return out;
  }

  // ---- train-recog ----
  TrainHistory run_train_recog(const std::string& mode) {
    if (mode != "ccr" && mode != "baseline") throw ConfigError("recognition mode must be ccr or baseline");
    auto records = need_manifest();
    std::map<std::int64_t, ProposalRecord> proposals;
    if (mode == "ccr") proposals = need_proposals();

    ModelConfig mc = cfg_.model;
    mc.num_classes = cfg_.scene.num_identities;
    mc.seed = cfg_.derived_seed(PipelineConfig::kSeedModelRecog);
    CamNet net(mc, HeadKind::kMultiLabelIdentity);

    std::vector<const FrameRecord*> train = split_of(records, "train");
    std::vector<MultiLabelSample> samples(train.size());
    parallel_for(train.size(), cfg_.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        Tensor img = load_image(*train[i]);
        if (mode == "ccr") {
          samples[i].image = crop_resize(img, proposals.at(train[i]->frame_id).box, mc.input_side);
        } else {
          samples[i].image = resize_bilinear(img, mc.input_side, mc.input_side);
        }
        samples[i].y = train[i]->y;
      }
    });

    ClassWeights weights = class_weights(records, "train");
    TrainHistory hist = train_recognition(net, samples, weights, cfg_.train_recog, cfg_.threads);
    std::filesystem::create_directories(cfg_.checkpoint_dir);
    save_checkpoint(recog_ckpt(mode).string(), net.to_checkpoint());
    hist.write_csv((fs(cfg_.checkpoint_dir) / ("recog_" + mode + "_history.csv")).string());
    return hist;
  }

  // ---- train-tracknets ----
  void run_train_tracknets(std::optional<Part> only = std::nullopt) {
    auto records = need_manifest();
    for (Part part : {Part::kFace, Part::kBody}) {
      if (only && *only != part) continue;
      const DetectorProfile& profile = part == Part::kFace ? cfg_.detector_face : cfg_.detector_body;
      std::vector<const FrameRecord*> train = split_of(records, "train");
      std::vector<FrameRecord> train_recs;
      for (const auto* r : train) train_recs.push_back(*r);
      std::vector<Detection> dets = simulate_detections(train_recs, profile, cfg_.scene.image_side);
      std::vector<Track> tracks = link_tracks(dets, cfg_.tracking.iou_threshold, cfg_.tracking.min_track_len);

      std::filesystem::create_directories(cfg_.checkpoint_dir);
      write_jsonl((fs(cfg_.checkpoint_dir) / (std::string("detections_train_") + part_name(part) + ".jsonl")).string(),
                  dets, detection_to_json);
      write_jsonl((fs(cfg_.checkpoint_dir) / (std::string("tracks_train_") + part_name(part) + ".jsonl")).string(),
                  tracks, track_to_json);

      // Frame-major crop extraction so each image is decoded once.
      struct CropJob {
        std::int64_t frame_id;
        BBox box;
        int label;
      };
      std::vector<CropJob> jobs;
      for (const auto& t : tracks) {
        if (t.gt_identity < 0) continue;
        for (const auto& d : t.members) jobs.push_back({d.frame_id, d.box, t.gt_identity});
      }
      std::stable_sort(jobs.begin(), jobs.end(),
                       [](const CropJob& a, const CropJob& b) { return a.frame_id < b.frame_id; });

      ModelConfig mc = cfg_.model;
      mc.num_classes = cfg_.scene.num_identities;
      mc.seed = cfg_.derived_seed(part == Part::kFace ? PipelineConfig::kSeedModelFace
                                                      : PipelineConfig::kSeedModelBody);
      CamNet net(mc, HeadKind::kSingleLabelIdentity);

      std::vector<SingleLabelSample> samples(jobs.size());
      parallel_for(jobs.size(), cfg_.threads, [&](std::size_t b, std::size_t e) {
        FrameCache cache(cfg_.dataset_dir, train_recs, 4);
        for (std::size_t i = b; i < e; ++i) {
          samples[i].image = crop_resize(cache.get(jobs[i].frame_id), jobs[i].box, mc.input_side);
          samples[i].label = jobs[i].label;
        }
      });

      TrainConfig tc = cfg_.train_track;
      tc.seed = cfg_.derived_seed(part == Part::kFace ? PipelineConfig::kSeedTrainTrackFace
                                                      : PipelineConfig::kSeedTrainTrackBody);
      TrainHistory hist = train_track_classifier(net, samples, tc, cfg_.threads);
      save_checkpoint(track_ckpt(part).string(), net.to_checkpoint());
      hist.write_csv((fs(cfg_.checkpoint_dir) / (std::string(part_name(part)) + "_history.csv")).string());
    }
  }

  // ---- eval ----
  struct MethodResult {
    std::string name;
    EvalReport report;
  };
  struct EvalOutcome {
    std::vector<MethodResult> methods;
    std::map<std::string, std::vector<Track>> test_tracks;  // face/body

    const EvalReport* find(const std::string& name) const {
      for (const auto& m : methods)
        if (m.name == name) return &m.report;
      return nullptr;
    }
  };

  EvalOutcome run_eval() {
    auto records = need_manifest();
    std::vector<const FrameRecord*> test = split_of(records, "test");
    std::vector<FrameRecord> test_recs;
    for (const auto* r : test) test_recs.push_back(*r);
    const int k = cfg_.scene.num_identities;

    EvalOutcome out;

    // Random scores: the floor every method should clear.
    {
      Rng rng(cfg_.derived_seed(PipelineConfig::kSeedRandomMethod));
      std::vector<Tensor> scores;
      for (std::size_t i = 0; i < test.size(); ++i) {
        Tensor s({k});
        for (int c = 0; c < k; ++c) s[c] = rng.uniform();
        scores.push_back(s);
      }
      out.methods.push_back({"random", frame_level_ap(scores, test)});
    }

    // Track methods.
    for (Part part : {Part::kFace, Part::kBody}) {
      auto ckpt = track_ckpt(part);
      if (!std::filesystem::exists(ckpt)) continue;
      CamNet net = load_net(ckpt, "track checkpoint");
      const DetectorProfile& profile = part == Part::kFace ? cfg_.detector_face : cfg_.detector_body;
      std::vector<Detection> dets = simulate_detections(test_recs, profile, cfg_.scene.image_side);
      std::vector<Track> tracks = link_tracks(dets, cfg_.tracking.iou_threshold, cfg_.tracking.min_track_len);
      FrameCache cache(cfg_.dataset_dir, test_recs, 8);
      for (auto& t : tracks) {
        t.scores = score_track(net, t, [&](std::int64_t f) -> const Tensor& { return cache.get(f); });
      }
      EvalReport rep = track_level_ap(tracks, test);
      rep.detector_recall = detector_recall(tracks, test);
      rep.identification_accuracy = tracks.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                   : identification_accuracy(tracks);
      std::filesystem::create_directories(cfg_.report_dir);
      write_jsonl((fs(cfg_.report_dir) / (std::string("detections_test_") + part_name(part) + ".jsonl")).string(),
                  dets, detection_to_json);
      write_jsonl((fs(cfg_.report_dir) / (std::string("tracks_test_") + part_name(part) + ".jsonl")).string(),
                  tracks, track_to_json);
      out.methods.push_back({part_name(part), rep});
      out.test_tracks[part_name(part)] = std::move(tracks);
    }

    // Frame methods.
    if (std::filesystem::exists(recog_ckpt("baseline"))) {
      CamNet net = load_net(recog_ckpt("baseline"), "baseline recognition checkpoint");
      out.methods.push_back({"baseline", frame_level_ap(frame_scores(net, test, nullptr), test)});
    }
    if (std::filesystem::exists(recog_ckpt("ccr"))) {
      auto proposals = need_proposals();
      CamNet net = load_net(recog_ckpt("ccr"), "ccr recognition checkpoint");
      out.methods.push_back({"ccr", frame_level_ap(frame_scores(net, test, &proposals), test)});
    }

    if (out.methods.size() == 1) {
      throw PrereqError("no trained method available to evaluate; train at least one of: "
                        "recog_ccr, recog_baseline, face, body");
    }
    write_report(out, test);
    return out;
  }

  // ---- localise ----
  std::vector<std::pair<std::int64_t, Localisation>> run_localise() {
    auto records = need_manifest();
    auto proposals = need_proposals();
    CamNet net = load_net(recog_ckpt("ccr"), "ccr recognition checkpoint (run train-recog --mode ccr)");

    std::vector<const FrameRecord*> test = split_of(records, "test");
    std::vector<std::vector<std::pair<std::int64_t, Localisation>>> rows(test.size());
    parallel_for(test.size(), cfg_.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const FrameRecord& rec = *test[i];
        if (rec.n == 0) continue;
        Tensor img = load_image(rec);
        BBox crop_box = proposals.at(rec.frame_id).box;
        Tensor region({3, crop_box.height(), crop_box.width()});
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < crop_box.height(); ++y)
            for (int x = 0; x < crop_box.width(); ++x)
              region.at(c, y, x) = img.at(c, crop_box.y0 + y, crop_box.x0 + x);
        std::vector<int> ids;
        for (int c = 0; c < static_cast<int>(rec.y.size()); ++c)
          if (rec.y[c]) ids.push_back(c);
        for (Localisation loc : localise_individuals(net, region, ids, cfg_.threshold)) {
          // Back to full-frame coordinates.
          loc.box.x0 += crop_box.x0;
          loc.box.x1 += crop_box.x0;
          loc.box.y0 += crop_box.y0;
          loc.box.y1 += crop_box.y0;
          loc.cx += crop_box.x0;
          loc.cy += crop_box.y0;
          rows[i].emplace_back(rec.frame_id, loc);
        }
      }
    });

    std::vector<std::pair<std::int64_t, Localisation>> flat;
    for (auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    std::filesystem::create_directories(cfg_.report_dir);
    write_jsonl(localisations_path().string(), flat, [](const std::pair<std::int64_t, Localisation>& row) {
      nlohmann::ordered_json j;
      j["frame_id"] = row.first;
      j["identity"] = row.second.identity;
      j["x0"] = row.second.box.x0;
      j["y0"] = row.second.box.y0;
      j["x1"] = row.second.box.x1;
      j["y1"] = row.second.box.y1;
      j["cx"] = row.second.cx;
      j["cy"] = row.second.cy;
      return j;
    });
    return flat;
  }

  // ---- viz ----
  void run_viz(int max_frames = 12) {
    auto records = need_manifest();
    auto proposals = need_proposals();
    std::map<std::int64_t, std::vector<Localisation>> locs;
    if (std::filesystem::exists(localisations_path())) {
      std::ifstream f(localisations_path());
      std::string line;
      while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        Localisation loc;
        loc.identity = j.at("identity").get<int>();
        loc.box = BBox{j.at("x0").get<int>(), j.at("y0").get<int>(), j.at("x1").get<int>(), j.at("y1").get<int>()};
        loc.cx = j.at("cx").get<double>();
        loc.cy = j.at("cy").get<double>();
        locs[j.at("frame_id").get<std::int64_t>()].push_back(loc);
      }
    }

    std::filesystem::create_directories(viz_dir());
    int made = 0;
    for (const auto& rec : records) {
      if (rec.split != "test") continue;
      if (made >= max_frames) break;
      ++made;
      Tensor img = load_image(rec);
      const ProposalRecord& prop = proposals.at(rec.frame_id);
      Tensor cam = read_pgm((fs(cfg_.dataset_dir) / prop.cam_path).string());
      Tensor heat_src = resize_bilinear(cam, img.dim(1), img.dim(2));
      Tensor heat({3, img.dim(1), img.dim(2)});
      for (int y = 0; y < img.dim(1); ++y)
        for (int x = 0; x < img.dim(2); ++x) {
          Rgb c = viz::jet(heat_src.at(y, x));
          for (int ch = 0; ch < 3; ++ch)
            heat.at(ch, y, x) = 0.45 * img.at(ch, y, x) + 0.55 * c[ch];
        }
      Tensor boxed = img;
      viz::draw_box(boxed, prop.box, {1.0, 0.1, 0.1});
      char name[64];
      std::snprintf(name, sizeof(name), "%lld_pipeline.ppm", static_cast<long long>(rec.frame_id));
      write_ppm((viz_dir() / name).string(), viz::hstack3(img, heat, boxed));

      auto it = locs.find(rec.frame_id);
      if (it != locs.end()) {
        Tensor overlay = img;
        for (const auto& loc : it->second) {
          Rgb color = hsv_to_rgb(360.0 * loc.identity / std::max(1, cfg_.scene.num_identities), 0.9, 1.0);
          viz::draw_box(overlay, loc.box, color, 1);
          viz::draw_cross(overlay, static_cast<int>(loc.cx), static_cast<int>(loc.cy), color);
        }
        std::snprintf(name, sizeof(name), "%lld_localisation.ppm", static_cast<long long>(rec.frame_id));
        write_ppm((viz_dir() / name).string(), overlay);
      }
    }
  }

  // ---- shared helpers ----
  std::vector<FrameRecord> need_manifest() const {
    if (!std::filesystem::exists(manifest_path())) {
      throw PrereqError("missing dataset manifest " + manifest_path().string() + "; run gen first");
    }
    return load_manifest(manifest_path().string());
  }

  std::map<std::int64_t, ProposalRecord> need_proposals() const {
    if (!std::filesystem::exists(proposals_path())) {
      throw PrereqError("missing proposals " + proposals_path().string() + "; run propose first");
    }
    std::ifstream f(proposals_path());
    std::map<std::int64_t, ProposalRecord> out;
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      ProposalRecord p = proposal_from_json(nlohmann::json::parse(line));
      out[p.frame_id] = p;
    }
    return out;
  }

  Tensor load_image(const FrameRecord& rec) const {
    try {
      return read_ppm((fs(cfg_.dataset_dir) / rec.path).string());
    } catch (const std::exception& e) {
      throw IoError(e.what());
    }
  }

  static std::vector<const FrameRecord*> split_of(const std::vector<FrameRecord>& records,
                                                  const std::string& split) {
    std::vector<const FrameRecord*> out;
    for (const auto& r : records)
      if (r.split == split) out.push_back(&r);
    return out;
  }

  CamNet load_net(const std::filesystem::path& path, const char* what) const {
    if (!std::filesystem::exists(path)) {
      throw PrereqError("missing " + std::string(what) + ": " + path.string());
    }
    return CamNet::from_checkpoint(load_checkpoint(path.string()));
  }

  std::vector<Tensor> frame_scores(const CamNet& net, const std::vector<const FrameRecord*>& frames,
                                   const std::map<std::int64_t, ProposalRecord>* proposals) const {
    std::vector<Tensor> scores(frames.size());
    parallel_for(frames.size(), cfg_.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        Tensor img = load_image(*frames[i]);
        Tensor input = proposals
                           ? crop_resize(img, proposals->at(frames[i]->frame_id).box, cfg_.model.input_side)
                           : resize_bilinear(img, cfg_.model.input_side, cfg_.model.input_side);
        scores[i] = net.predict_identities(input);
      }
    });
    return scores;
  }

 private:
  static std::filesystem::path fs(const std::string& s) { return std::filesystem::path(s); }

  static nlohmann::ordered_json report_json(const EvalReport& rep) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
    for (double ap : rep.per_class_ap) {
      if (std::isnan(ap)) per_class.push_back(nullptr);
      else per_class.push_back(ap);
    }
    j["per_class_ap"] = per_class;
    j["macro_ap"] = rep.macro_ap;
    j["micro_ap"] = rep.micro_ap;
    j["detector_recall"] = rep.detector_recall;
    if (std::isnan(rep.identification_accuracy)) j["identification_accuracy"] = nullptr;
    else j["identification_accuracy"] = rep.identification_accuracy;
    j["per_class_recall_ceiling"] = rep.per_class_ceiling;
    nlohmann::ordered_json pr = nlohmann::ordered_json::array();
    for (const auto& curve : rep.pr) {
      nlohmann::ordered_json pts = nlohmann::ordered_json::array();
      for (const auto& p : curve) pts.push_back({p.recall, p.precision});
      pr.push_back(pts);
    }
    j["pr_points"] = pr;
    return j;
  }

  void write_report(const EvalOutcome& out, const std::vector<const FrameRecord*>& test) {
    std::filesystem::create_directories(cfg_.report_dir);
    nlohmann::ordered_json j;
    j["version"] = kVersion;
    j["config"] = cfg_.to_json();
    j["test_frames"] = test.size();
    nlohmann::ordered_json methods;
    for (const auto& m : out.methods) {
      methods[m.name] = report_json(m.report);
      for (std::size_t c = 0; c < m.report.pr.size(); ++c) {
        if (m.report.pr[c].empty()) continue;
        char name[64];
        std::snprintf(name, sizeof(name), "pr_%s_class%zu.csv", m.name.c_str(), c);
        write_pr_csv((fs(cfg_.report_dir) / name).string(), m.report.pr[c]);
      }
    }
    j["methods"] = methods;

    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    for (const auto& m : out.methods) {
      nlohmann::ordered_json row;
      row["method"] = m.name;
      row["mAP"] = 100.0 * m.report.macro_ap;
      row["miAP"] = 100.0 * m.report.micro_ap;
      table.push_back(row);
    }
    j["table"] = table;

    std::ofstream f(report_path());
    if (!f) throw IoError("cannot write report: " + report_path().string());
    f << j.dump(2) << "\n";
  }

  PipelineConfig cfg_;
};

inline void print_comparison_table(const Pipeline::EvalOutcome& out, std::ostream& os) {
  os << "method     mAP    miAP   recall  id-acc\n";
  for (const auto& m : out.methods) {
    char line[128];
    if (std::isnan(m.report.identification_accuracy)) {
      std::snprintf(line, sizeof(line), "%-9s %6.1f %6.1f %7.1f %7s\n", m.name.c_str(),
                    100.0 * m.report.macro_ap, 100.0 * m.report.micro_ap,
                    100.0 * m.report.detector_recall, "-");
    } else {
      std::snprintf(line, sizeof(line), "%-9s %6.1f %6.1f %7.1f %7.1f\n", m.name.c_str(),
                    100.0 * m.report.macro_ap, 100.0 * m.report.micro_ap,
                    100.0 * m.report.detector_recall, 100.0 * m.report.identification_accuracy);
    }
    os << line;
  }
}

}  // namespace ccr
