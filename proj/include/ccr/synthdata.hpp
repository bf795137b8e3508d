#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ccr/image.hpp"
#include "ccr/parallel.hpp"
#include "ccr/rng.hpp"
#include "ccr/tensor.hpp"

namespace ccr {

using Rgb = std::array<double, 3>;

inline Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  int i = static_cast<int>(h);
  double f = h - i;
  double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  switch (i % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// One renderable identity. Identities share a narrow band of body colors on
// purpose; what separates them is the fine two-tone marking and the stripe
// frequency, neither of which survives a full-frame downsample to the net
// input size.
struct IndividualSpec {
  int id = 0;
  Rgb body_color{};
  double stripe_cycles = 8.0;
  double stripe_orient = 0.0;   // radians, relative to the body axis
  double stripe_phase = 0.0;
  double stripe_contrast = 0.12;
  double marking_hue = 0.0;     // degrees; checker pairs this hue with hue+180
  Rgb marking_color_a{};
  Rgb marking_color_b{};
  double marking_radius = 4.5;  // pixels at full resolution (~8-9 px across)
  double marking_u = 0.0;       // position in unit body coordinates
  double marking_v = 0.0;
  Rgb face_color_a{};
  Rgb face_color_b{};
};

struct SceneConfig {
  int num_identities = 6;
  int train_frames = 2000;
  int test_frames = 500;
  int image_side = 256;
  int max_individuals = 4;
  std::vector<double> count_distribution = {0.25, 0.30, 0.20, 0.15, 0.10};  // over 0..max
  double face_visibility = 0.4;
  double body_visibility = 0.9;
  double occlusion_prob = 0.25;
  double clutter_density = 0.0006;  // shapes per pixel
  int burst_len = 5;                // frames per static scene burst
  std::uint64_t master_seed = 7041;
};

struct PartBox {
  int id = 0;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool visible = true;
};

struct FrameRecord {
  std::int64_t frame_id = 0;
  std::string path;
  std::string split;
  std::vector<int> y;
  int n = 0;
  std::vector<PartBox> body_boxes;
  std::vector<PartBox> face_boxes;  // present iff the face is visible
};

inline nlohmann::ordered_json frame_record_to_json(const FrameRecord& r) {
  nlohmann::ordered_json j;
  j["frame_id"] = r.frame_id;
  j["path"] = r.path;
  j["split"] = r.split;
  j["y"] = r.y;
  j["n"] = r.n;
  auto boxes = [](const std::vector<PartBox>& bs) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& b : bs) {
      nlohmann::ordered_json e;
      e["id"] = b.id;
      e["x0"] = b.x0;
      e["y0"] = b.y0;
      e["x1"] = b.x1;
      e["y1"] = b.y1;
      e["visible"] = b.visible;
      arr.push_back(e);
    }
    return arr;
  };
  j["body_boxes"] = boxes(r.body_boxes);
  j["face_boxes"] = boxes(r.face_boxes);
  return j;
}

inline FrameRecord frame_record_from_json(const nlohmann::json& j) {
  FrameRecord r;
  r.frame_id = j.at("frame_id").get<std::int64_t>();
  r.path = j.at("path").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.y = j.at("y").get<std::vector<int>>();
  r.n = j.at("n").get<int>();
  auto boxes = [](const nlohmann::json& arr) {
    std::vector<PartBox> bs;
    for (const auto& e : arr) {
      PartBox b;
      b.id = e.at("id").get<int>();
      b.x0 = e.at("x0").get<int>();
      b.y0 = e.at("y0").get<int>();
      b.x1 = e.at("x1").get<int>();
      b.y1 = e.at("y1").get<int>();
      b.visible = e.value("visible", true);
      bs.push_back(b);
    }
    return bs;
  };
  r.body_boxes = boxes(j.at("body_boxes"));
  r.face_boxes = boxes(j.at("face_boxes"));
  return r;
}

inline std::vector<FrameRecord> load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("manifest: cannot open: " + path);
  std::vector<FrameRecord> records;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    records.push_back(frame_record_from_json(nlohmann::json::parse(line)));
  }
  return records;
}

// Deterministic per seed; marking hues and stripe frequencies are resampled
// until pairwise distinct.
inline std::vector<IndividualSpec> generate_individual_specs(int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("generate_individual_specs: need K >= 2, got " + std::to_string(k));
  Rng rng = Rng::stream(seed, {0x1D5ull});
  std::vector<IndividualSpec> specs;

  // Rejection sampling with a gap that shrinks whenever a round fails, so the
  // loop always terminates while keeping separation as large as possible.
  auto sample_separated = [&rng](double lo, double hi, double gap,
                                 const std::function<double(double, double)>& dist,
                                 const std::vector<double>& taken) {
    for (;;) {
      for (int attempt = 0; attempt < 200; ++attempt) {
        double cand = rng.uniform(lo, hi);
        bool ok = true;
        for (double prev : taken)
          if (dist(cand, prev) < gap) { ok = false; break; }
        if (ok) return cand;
      }
      gap *= 0.8;
    }
  };
  // The checker pairs hue with hue+180, so identity separation lives on the
  // half circle.
  auto hue_dist = [](double a, double b) {
    double d = std::fabs(std::fmod(std::fabs(a - b), 180.0));
    return std::min(d, 180.0 - d);
  };
  auto abs_dist = [](double a, double b) { return std::fabs(a - b); };
  const double hue_gap = 0.7 * 180.0 / k;
  std::vector<double> hues, cycles_taken;

  for (int i = 0; i < k; ++i) {
    IndividualSpec s;
    s.id = i;
    // Browns in a narrow band so coarse color alone cannot separate identities.
    double base = rng.uniform(-0.03, 0.03);
    s.body_color = {0.44 + base + rng.uniform(-0.015, 0.015), 0.31 + base, 0.19 + base};

    s.marking_hue = sample_separated(0.0, 360.0, hue_gap, hue_dist, hues);
    hues.push_back(s.marking_hue);
    s.marking_color_a = hsv_to_rgb(s.marking_hue, 0.92, 0.92);
    s.marking_color_b = hsv_to_rgb(s.marking_hue + 180.0, 0.92, 0.92);
    s.marking_radius = rng.uniform(4.0, 5.0);
    double ang = rng.uniform(0.0, 6.2831853);
    double rad = rng.uniform(0.15, 0.45);
    s.marking_u = rad * std::cos(ang);
    s.marking_v = rad * std::sin(ang);

    s.stripe_cycles = sample_separated(6.0, 16.0, std::min(0.9, 7.0 / k), abs_dist, cycles_taken);
    cycles_taken.push_back(s.stripe_cycles);
    s.stripe_orient = rng.uniform(0.0, 3.1415926);
    s.stripe_phase = rng.uniform(0.0, 6.2831853);
    s.stripe_contrast = rng.uniform(0.10, 0.16);

    s.face_color_a = hsv_to_rgb(s.marking_hue + 90.0, 0.85, 0.9);
    s.face_color_b = hsv_to_rgb(s.marking_hue + 270.0, 0.85, 0.9);
    specs.push_back(s);
  }
  return specs;
}

namespace scene {

struct Placed {
  int identity = 0;
  double cx = 0, cy = 0;      // scene-level center; per-frame drift added on top
  double a = 30, b = 20;      // ellipse half-axes
  double theta = 0;
  bool face_visible = true;
  bool body_visible = true;
  bool occluded = false;
  double occ_dx = 0, occ_dy = 0, occ_w = 0, occ_h = 0;
  std::vector<std::pair<double, double>> drift;  // per frame in burst
};

struct Shape {
  double cx = 0, cy = 0, rx = 4, ry = 4, theta = 0;
  Rgb color{};
  bool rect = false;
};

struct Scene {
  int scene_index = 0;
  std::string split;
  std::vector<Placed> individuals;
  std::vector<Shape> clutter;
  std::vector<Shape> distractors;  // small saturated discs, random hues
  Rgb bg{};
  double shade = 1.0;
  std::vector<double> frame_brightness;  // per frame in burst
};

// Exact axis-aligned bbox of a rotated ellipse.
inline void ellipse_extent(double a, double b, double theta, double& ex, double& ey) {
  double c = std::cos(theta), s = std::sin(theta);
  ex = std::sqrt(a * a * c * c + b * b * s * s);
  ey = std::sqrt(a * a * s * s + b * b * c * c);
}

inline void face_offset(const Placed& p, double& fx, double& fy) {
  double c = std::cos(p.theta), s = std::sin(p.theta);
  fx = p.cx + 0.95 * p.a * c;
  fy = p.cy + 0.95 * p.a * s;
}

inline constexpr double kFaceRadius = 6.5;

}  // namespace scene

class SceneSampler {
 public:
  explicit SceneSampler(const SceneConfig& cfg)
      : cfg_(cfg),
        face_count_(cfg.num_identities, 0), body_count_(cfg.num_identities, 0),
        face_phase_(cfg.num_identities), body_phase_(cfg.num_identities) {
    Rng rng = Rng::stream(cfg.master_seed, {0xFA5Eull});
    for (int i = 0; i < cfg.num_identities; ++i) {
      face_phase_[i] = rng.uniform();
      body_phase_[i] = rng.uniform();
    }
  }

  scene::Scene sample(int scene_index, const std::string& split, const std::vector<int>& identities) {
    Rng rng = Rng::stream(cfg_.master_seed, {0x5CE2Eull, static_cast<std::uint64_t>(scene_index)});
    scene::Scene sc;
    sc.scene_index = scene_index;
    sc.split = split;
    double g = rng.uniform(0.18, 0.30);
    sc.bg = {g * rng.uniform(0.7, 0.95), g * rng.uniform(1.15, 1.45), g * rng.uniform(0.65, 0.9)};
    sc.shade = rng.uniform(0.92, 1.08);

    const double side = cfg_.image_side;
    int n_clutter = static_cast<int>(std::llround(cfg_.clutter_density * side * side));
    for (int i = 0; i < n_clutter; ++i) {
      scene::Shape sh;
      sh.cx = rng.uniform(0, side);
      sh.cy = rng.uniform(0, side);
      sh.rx = rng.uniform(3.0, 22.0);
      sh.ry = rng.uniform(3.0, 22.0);
      sh.theta = rng.uniform(0.0, 3.1415926);
      double hue = rng.bernoulli(0.6) ? rng.uniform(70.0, 150.0) : rng.uniform(20.0, 55.0);
      double sat = rng.uniform(0.15, 0.45);
      double val = rng.uniform(0.15, 0.45);
      sh.color = hsv_to_rgb(hue, sat, val);
      sh.rect = rng.bernoulli(0.3);
      sc.clutter.push_back(sh);
    }
    int n_distract = 6 + rng.below_int(5);
    for (int i = 0; i < n_distract; ++i) {
      scene::Shape sh;
      sh.cx = rng.uniform(0, side);
      sh.cy = rng.uniform(0, side);
      sh.rx = sh.ry = rng.uniform(2.0, 4.5);
      sh.color = hsv_to_rgb(rng.uniform(0.0, 360.0), 0.9, 0.9);
      sc.distractors.push_back(sh);
    }

    for (int id : identities) {
      scene::Placed p;
      p.identity = id;
      p.a = rng.uniform(26.0, 40.0);
      p.b = rng.uniform(0.55, 0.72) * p.a;
      p.theta = rng.uniform(0.0, 6.2831853);
      double margin = p.a + scene::kFaceRadius + 4.0;
      for (int attempt = 0; attempt < 120; ++attempt) {
        p.cx = rng.uniform(margin, side - margin);
        p.cy = rng.uniform(margin, side - margin);
        bool ok = true;
        for (const auto& q : sc.individuals) {
          double dx = p.cx - q.cx, dy = p.cy - q.cy;
          if (dx * dx + dy * dy < 56.0 * 56.0) { ok = false; break; }
        }
        if (ok) break;
      }
      p.face_visible = quota_visible(face_count_[id]++, cfg_.face_visibility, face_phase_[id]);
      p.body_visible = quota_visible(body_count_[id]++, cfg_.body_visibility, body_phase_[id]);
      p.occluded = rng.bernoulli(cfg_.occlusion_prob);
      if (p.occluded) {
        // A foliage patch over the tail end of the body, away from the face.
        double c = std::cos(p.theta), s = std::sin(p.theta);
        p.occ_dx = -0.7 * p.a * c + rng.uniform(-4.0, 4.0);
        p.occ_dy = -0.7 * p.a * s + rng.uniform(-4.0, 4.0);
        p.occ_w = rng.uniform(0.45, 0.7) * p.a;
        p.occ_h = rng.uniform(0.45, 0.7) * p.b;
      }
      double dx = 0, dy = 0;
      for (int j = 0; j < cfg_.burst_len; ++j) {
        p.drift.emplace_back(dx, dy);
        dx += rng.uniform(-2.0, 2.0);
        dy += rng.uniform(-2.0, 2.0);
      }
      sc.individuals.push_back(p);
    }
    for (int j = 0; j < cfg_.burst_len; ++j) sc.frame_brightness.push_back(rng.uniform(0.97, 1.03));
    return sc;
  }

 private:
  // Low-discrepancy visibility sequence: over any window of m appearances the
  // visible fraction is within 1/m of p, which pins the benchmark's empirical
  // rates to their configured values.
  static bool quota_visible(int k, double p, double phase) {
    return std::floor(p * (k + 1) + phase) > std::floor(p * k + phase);
  }

  SceneConfig cfg_;
  std::vector<int> face_count_, body_count_;
  std::vector<double> face_phase_, body_phase_;
};

namespace render {

inline void paint_disc(Tensor& img, std::vector<int>& owner, int owner_id, double cx, double cy,
                       double r, const std::function<Rgb(double, double)>& color_at) {
  const int side = img.dim(1);
  int x0 = std::max(0, static_cast<int>(cx - r - 1)), x1 = std::min(side - 1, static_cast<int>(cx + r + 1));
  int y0 = std::max(0, static_cast<int>(cy - r - 1)), y1 = std::min(side - 1, static_cast<int>(cy + r + 1));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      if (dx * dx + dy * dy > r * r) continue;
      Rgb c = color_at(x + 0.5, y + 0.5);
      for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = c[ch];
      if (!owner.empty()) owner[static_cast<std::size_t>(y) * side + x] = owner_id;
    }
}

inline void paint_shape(Tensor& img, std::vector<int>& owner, int owner_id, const scene::Shape& sh) {
  const int side = img.dim(1);
  double ex, ey;
  scene::ellipse_extent(sh.rx, sh.ry, sh.theta, ex, ey);
  if (sh.rect) { ex = sh.rx + sh.ry; ey = ex; }
  int x0 = std::max(0, static_cast<int>(sh.cx - ex - 1)), x1 = std::min(side - 1, static_cast<int>(sh.cx + ex + 1));
  int y0 = std::max(0, static_cast<int>(sh.cy - ey - 1)), y1 = std::min(side - 1, static_cast<int>(sh.cy + ey + 1));
  double c = std::cos(sh.theta), s = std::sin(sh.theta);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double dx = x + 0.5 - sh.cx, dy = y + 0.5 - sh.cy;
      double lx = c * dx + s * dy, ly = -s * dx + c * dy;
      bool inside = sh.rect ? (std::fabs(lx) <= sh.rx && std::fabs(ly) <= sh.ry)
                            : (lx * lx / (sh.rx * sh.rx) + ly * ly / (sh.ry * sh.ry) <= 1.0);
      if (!inside) continue;
      for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = sh.color[ch];
      if (!owner.empty()) owner[static_cast<std::size_t>(y) * side + x] = owner_id;
    }
}

}  // namespace render

// Renders one frame of a scene burst and produces its ground-truth record.
// Everything is a pure function of (specs, config, scene descriptor, j).
inline std::pair<Tensor, FrameRecord> render_scene_frame(const std::vector<IndividualSpec>& specs,
                                                         const SceneConfig& cfg,
                                                         const scene::Scene& sc, int j,
                                                         std::int64_t frame_id) {
  const int side = cfg.image_side;
  Tensor img({3, side, side});
  std::vector<int> owner;  // unused owner layer for background shapes
  const double bright = sc.frame_brightness[static_cast<std::size_t>(j)] * sc.shade;

  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = sc.bg[ch] * bright;

  for (const auto& sh : sc.clutter) render::paint_shape(img, owner, 0, sh);
  for (const auto& sh : sc.distractors)
    render::paint_disc(img, owner, 0, sh.cx, sh.cy, sh.rx, [&](double, double) { return sh.color; });

  FrameRecord rec;
  rec.frame_id = frame_id;
  rec.split = sc.split;
  rec.y.assign(cfg.num_identities, 0);

  auto clampi = [&](double v) { return std::max(0, std::min(side, static_cast<int>(std::lround(v)))); };

  for (const auto& p : sc.individuals) {
    const IndividualSpec& spec = specs[static_cast<std::size_t>(p.identity)];
    rec.y[static_cast<std::size_t>(p.identity)] = 1;
    const double cx = p.cx + p.drift[static_cast<std::size_t>(j)].first;
    const double cy = p.cy + p.drift[static_cast<std::size_t>(j)].second;
    const double ct = std::cos(p.theta), st = std::sin(p.theta);

    // Body: striped ellipse.
    {
      double ex, ey;
      scene::ellipse_extent(p.a, p.b, p.theta, ex, ey);
      int bx0 = std::max(0, static_cast<int>(cx - ex - 1)), bx1 = std::min(side - 1, static_cast<int>(cx + ex + 1));
      int by0 = std::max(0, static_cast<int>(cy - ey - 1)), by1 = std::min(side - 1, static_cast<int>(cy + ey + 1));
      const double so_c = std::cos(spec.stripe_orient), so_s = std::sin(spec.stripe_orient);
      for (int y = by0; y <= by1; ++y)
        for (int x = bx0; x <= bx1; ++x) {
          double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          double lx = ct * dx + st * dy, ly = -st * dx + ct * dy;
          double u = lx / p.a, v = ly / p.b;
          if (u * u + v * v > 1.0) continue;
          double t = so_c * u + so_s * v;
          double sq = std::sin(3.1415926 * spec.stripe_cycles * t + spec.stripe_phase) > 0 ? 1.0 : -1.0;
          double mod = (1.0 + spec.stripe_contrast * sq) * bright;
          for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = std::min(1.0, spec.body_color[ch] * mod);
        }
    }

    // Fine two-tone marking, checkered in full-resolution pixel cells.
    {
      double mx = cx + ct * spec.marking_u * p.a - st * spec.marking_v * p.b;
      double my = cy + st * spec.marking_u * p.a + ct * spec.marking_v * p.b;
      render::paint_disc(img, owner, 0, mx, my, spec.marking_radius, [&](double px, double py) {
        int cell = (static_cast<int>(px / 3.0) + static_cast<int>(py / 3.0)) & 1;
        return cell ? spec.marking_color_b : spec.marking_color_a;
      });
    }

    // Head disc; the identity pattern is only drawn when the face is visible.
    double fx = cx + 0.95 * p.a * ct, fy = cy + 0.95 * p.a * st;
    if (p.face_visible) {
      render::paint_disc(img, owner, 0, fx, fy, scene::kFaceRadius, [&](double px, double py) {
        double dx = px - fx, dy = py - fy;
        double r = std::sqrt(dx * dx + dy * dy) / scene::kFaceRadius;
        return r < 0.55 ? spec.face_color_a : spec.face_color_b;
      });
    } else {
      render::paint_disc(img, owner, 0, fx, fy, scene::kFaceRadius, [&](double, double) {
        Rgb c = spec.body_color;
        for (auto& ch : c) ch = std::min(1.0, ch * 0.85 * bright);
        return c;
      });
    }

    if (p.occluded) {
      scene::Shape occ;
      occ.cx = cx + p.occ_dx;
      occ.cy = cy + p.occ_dy;
      occ.rx = p.occ_w;
      occ.ry = p.occ_h;
      occ.theta = p.theta;
      occ.color = {sc.bg[0] * 0.8, sc.bg[1] * 1.1, sc.bg[2] * 0.8};
      render::paint_shape(img, owner, 0, occ);
    }

    // Ground truth from geometry: body box is the ellipse-plus-head extent.
    double ex, ey;
    scene::ellipse_extent(p.a, p.b, p.theta, ex, ey);
    double bx0 = std::min(cx - ex, fx - scene::kFaceRadius);
    double bx1 = std::max(cx + ex, fx + scene::kFaceRadius);
    double by0 = std::min(cy - ey, fy - scene::kFaceRadius);
    double by1 = std::max(cy + ey, fy + scene::kFaceRadius);
    PartBox body;
    body.id = p.identity;
    body.x0 = clampi(bx0);
    body.y0 = clampi(by0);
    body.x1 = std::max(body.x0 + 1, clampi(bx1));
    body.y1 = std::max(body.y0 + 1, clampi(by1));
    body.visible = p.body_visible;
    rec.body_boxes.push_back(body);

    if (p.face_visible) {
      PartBox face;
      face.id = p.identity;
      face.x0 = clampi(fx - scene::kFaceRadius - 1);
      face.y0 = clampi(fy - scene::kFaceRadius - 1);
      face.x1 = std::max(face.x0 + 1, clampi(fx + scene::kFaceRadius + 1));
      face.y1 = std::max(face.y0 + 1, clampi(fy + scene::kFaceRadius + 1));
      face.visible = true;
      rec.face_boxes.push_back(face);
    }
  }

  rec.n = 0;
  for (int v : rec.y) rec.n += v;
  return {std::move(img), std::move(rec)};
}

struct DatasetSummary {
  int train_frames = 0;
  int test_frames = 0;
  std::vector<int> train_instance_counts;  // f_i per identity, train split
  std::vector<int> test_instance_counts;
  std::vector<int> count_histogram;        // frames per true count
};

// Writes PPM images plus a JSON-lines manifest; byte-reproducible from the
// config alone.
inline DatasetSummary generate_dataset(const SceneConfig& cfg, const std::string& out_dir,
                                       int threads = 1) {
  namespace fs = std::filesystem;
  if (cfg.num_identities < 2) throw std::invalid_argument("generate_dataset: need K >= 2");
  if (cfg.count_distribution.size() != static_cast<std::size_t>(cfg.max_individuals) + 1) {
    throw std::invalid_argument("generate_dataset: count_distribution must have max_individuals+1 entries");
  }
  fs::create_directories(fs::path(out_dir) / "images");

  std::vector<IndividualSpec> specs = generate_individual_specs(cfg.num_identities, cfg.master_seed);

  // Zipf-ish identity weights give the class imbalance the weighted loss needs.
  std::vector<double> id_weight(cfg.num_identities);
  for (int i = 0; i < cfg.num_identities; ++i) id_weight[i] = 1.0 / (1.0 + i);

  auto sample_count = [&](Rng& rng) {
    double total = 0;
    for (double p : cfg.count_distribution) total += p;
    double u = rng.uniform() * total, acc = 0;
    for (std::size_t c = 0; c < cfg.count_distribution.size(); ++c) {
      acc += cfg.count_distribution[c];
      if (u < acc) return static_cast<int>(c);
    }
    return cfg.max_individuals;
  };
  auto sample_identities = [&](Rng& rng, int n) {
    std::vector<int> pool(cfg.num_identities);
    std::vector<double> w = id_weight;
    for (int i = 0; i < cfg.num_identities; ++i) pool[i] = i;
    std::vector<int> out;
    for (int pick = 0; pick < n; ++pick) {
      double total = 0;
      for (std::size_t i = 0; i < w.size(); ++i) total += w[i];
      double u = rng.uniform() * total, acc = 0;
      std::size_t chosen = w.size() - 1;
      for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (u < acc) { chosen = i; break; }
      }
      out.push_back(pool[chosen]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(chosen));
      w.erase(w.begin() + static_cast<std::ptrdiff_t>(chosen));
    }
    std::sort(out.begin(), out.end());
    return out;
  };

  struct SceneIds {
    std::string split;
    std::vector<int> ids;
    int frames = 0;  // burst length, possibly truncated at the split tail
  };
  std::vector<SceneIds> scene_ids;
  auto plan_split = [&](const std::string& split, int frames, int scene_base) {
    int scenes = (frames + cfg.burst_len - 1) / cfg.burst_len;
    for (int s = 0; s < scenes; ++s) {
      Rng rng = Rng::stream(cfg.master_seed, {0xC0117ull, static_cast<std::uint64_t>(scene_base + s)});
      SceneIds si;
      si.split = split;
      si.ids = sample_identities(rng, sample_count(rng));
      si.frames = std::min(cfg.burst_len, frames - s * cfg.burst_len);
      scene_ids.push_back(std::move(si));
    }
  };
  plan_split("train", cfg.train_frames, 0);
  plan_split("test", cfg.test_frames, 1 << 20);

  // Rebalance: every identity must appear at least once per split.
  for (const char* split : {"train", "test"}) {
    std::vector<int> count(cfg.num_identities, 0);
    for (const auto& si : scene_ids)
      if (si.split == split)
        for (int id : si.ids) ++count[static_cast<std::size_t>(id)];
    for (int id = 0; id < cfg.num_identities; ++id) {
      if (count[static_cast<std::size_t>(id)] > 0) continue;
      bool placed = false;
      // Prefer swapping out the most frequent identity of some scene.
      for (auto& si : scene_ids) {
        if (si.split != split || si.ids.empty()) continue;
        if (std::find(si.ids.begin(), si.ids.end(), id) != si.ids.end()) continue;
        int richest = si.ids.front();
        for (int cand : si.ids)
          if (count[static_cast<std::size_t>(cand)] > count[static_cast<std::size_t>(richest)]) richest = cand;
        if (count[static_cast<std::size_t>(richest)] <= 1) continue;
        std::replace(si.ids.begin(), si.ids.end(), richest, id);
        --count[static_cast<std::size_t>(richest)];
        ++count[static_cast<std::size_t>(id)];
        std::sort(si.ids.begin(), si.ids.end());
        placed = true;
        break;
      }
      if (placed) continue;
      // No donor class has a spare appearance; append to the fullest scene
      // with room instead.
      SceneIds* best = nullptr;
      for (auto& si : scene_ids) {
        if (si.split != split) continue;
        if (static_cast<int>(si.ids.size()) >= cfg.max_individuals) continue;
        if (std::find(si.ids.begin(), si.ids.end(), id) != si.ids.end()) continue;
        if (!best || si.ids.size() > best->ids.size()) best = &si;
      }
      if (!best) {
        throw std::runtime_error("generate_dataset: cannot place identity " + std::to_string(id) +
                                 " in split '" + std::string(split) + "'; too few frames");
      }
      best->ids.push_back(id);
      std::sort(best->ids.begin(), best->ids.end());
      ++count[static_cast<std::size_t>(id)];
    }
  }

  SceneSampler sampler(cfg);
  std::vector<scene::Scene> scenes;
  scenes.reserve(scene_ids.size());
  for (std::size_t s = 0; s < scene_ids.size(); ++s) {
    scenes.push_back(sampler.sample(static_cast<int>(s), scene_ids[s].split, scene_ids[s].ids));
  }

  // Frame table: global ids in generation order.
  struct FramePlan {
    std::size_t scene = 0;
    int j = 0;
    std::int64_t frame_id = 0;
  };
  std::vector<FramePlan> plan;
  std::int64_t next_id = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s)
    for (int j = 0; j < scene_ids[s].frames; ++j) plan.push_back({s, j, next_id++});

  std::vector<FrameRecord> records(plan.size());
  parallel_for(plan.size(), threads, [&](std::size_t begin, std::size_t end) {
    char name[32];
    for (std::size_t i = begin; i < end; ++i) {
      const FramePlan& fp = plan[i];
      auto [img, rec] = render_scene_frame(specs, cfg, scenes[fp.scene], fp.j, fp.frame_id);
      std::snprintf(name, sizeof(name), "images/%06lld.ppm", static_cast<long long>(fp.frame_id));
      rec.path = name;
      write_ppm((fs::path(out_dir) / rec.path).string(), img);
      records[i] = std::move(rec);
    }
  });

  std::ofstream mf((fs::path(out_dir) / "manifest.jsonl").string());
  if (!mf) throw std::runtime_error("generate_dataset: cannot write manifest in " + out_dir);
  DatasetSummary sum;
  sum.train_instance_counts.assign(cfg.num_identities, 0);
  sum.test_instance_counts.assign(cfg.num_identities, 0);
  sum.count_histogram.assign(cfg.max_individuals + 1, 0);
  for (const auto& rec : records) {
    mf << frame_record_to_json(rec).dump() << "\n";
    auto& counts = rec.split == "train" ? sum.train_instance_counts : sum.test_instance_counts;
    (rec.split == "train" ? sum.train_frames : sum.test_frames) += 1;
    for (int id = 0; id < cfg.num_identities; ++id) counts[static_cast<std::size_t>(id)] += rec.y[static_cast<std::size_t>(id)];
    sum.count_histogram[static_cast<std::size_t>(rec.n)] += 1;
  }
  if (!mf) throw std::runtime_error("generate_dataset: manifest write failed in " + out_dir);
  return sum;
}

}  // namespace ccr
