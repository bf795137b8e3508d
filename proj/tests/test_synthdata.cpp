#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "ccr/image.hpp"
#include "ccr/proposal.hpp"
#include "ccr/synthdata.hpp"

using namespace ccr;
namespace fs = std::filesystem;

namespace {

SceneConfig tiny_config() {
  SceneConfig cfg;
  cfg.num_identities = 3;
  cfg.train_frames = 40;
  cfg.test_frames = 20;
  cfg.image_side = 128;
  cfg.max_individuals = 3;
  cfg.count_distribution = {0.25, 0.35, 0.25, 0.15};
  cfg.burst_len = 5;
  cfg.master_seed = 99;
  return cfg;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("individual specs: determinism, distinctness, seed sensitivity") {
  auto a = generate_individual_specs(6, 1);
  auto b = generate_individual_specs(6, 1);
  auto c = generate_individual_specs(6, 2);
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].marking_hue == b[i].marking_hue);
    CHECK(a[i].stripe_cycles == b[i].stripe_cycles);
  }
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].marking_hue != c[i].marking_hue) differs = true;
  CHECK(differs);

  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      // Marking checkers pair hue with hue+180, so distinctness lives on the
      // half circle.
      double d = std::fabs(std::fmod(std::fabs(a[i].marking_hue - a[j].marking_hue), 180.0));
      d = std::min(d, 180.0 - d);
      CHECK(d > 8.0);
      CHECK(std::fabs(a[i].stripe_cycles - a[j].stripe_cycles) >= 0.5);
    }

  CHECK_THROWS_AS(generate_individual_specs(1, 5), std::invalid_argument);
}

TEST_CASE("render: degenerate zero-count scene has no individuals") {
  SceneConfig cfg = tiny_config();
  auto specs = generate_individual_specs(cfg.num_identities, cfg.master_seed);
  SceneSampler sampler(cfg);
  scene::Scene sc = sampler.sample(0, "train", {});
  auto [img, rec] = render_scene_frame(specs, cfg, sc, 0, 0);
  CHECK(rec.n == 0);
  for (int v : rec.y) CHECK(v == 0);
  CHECK(rec.body_boxes.empty());
  CHECK(rec.face_boxes.empty());
  CHECK(img.all_finite());
}

TEST_CASE("render: gt boxes contain the individuals' rendered pixels") {
  SceneConfig cfg = tiny_config();
  auto specs = generate_individual_specs(cfg.num_identities, cfg.master_seed);
  SceneSampler sampler(cfg);
  for (int s = 0; s < 6; ++s) {
    scene::Scene sc = sampler.sample(s, "train", {0, 2});
    // The occluder belongs to the scene, not the individual; disable it so the
    // image diff below isolates the individual's own pixels.
    for (auto& p : sc.individuals) p.occluded = false;
    auto [img, rec] = render_scene_frame(specs, cfg, sc, 1, s);
    REQUIRE(rec.body_boxes.size() == 2);
    CHECK(rec.n == 2);
    CHECK(rec.y == std::vector<int>{1, 0, 1});
    // Render the same scene with one individual dropped; pixels that changed
    // must lie inside the dropped individual's body box.
    scene::Scene solo = sc;
    solo.individuals.erase(solo.individuals.begin());
    auto [img2, rec2] = render_scene_frame(specs, cfg, solo, 1, s);
    const PartBox& box = rec.body_boxes[0];
    long long changed = 0, inside = 0;
    for (int y = 0; y < cfg.image_side; ++y)
      for (int x = 0; x < cfg.image_side; ++x) {
        bool diff = false;
        for (int c = 0; c < 3; ++c)
          if (img.at(c, y, x) != img2.at(c, y, x)) diff = true;
        if (!diff) continue;
        ++changed;
        if (x >= box.x0 && x < box.x1 && y >= box.y0 && y < box.y1) ++inside;
      }
    REQUIRE(changed > 0);
    // Occluders sampled relative to the individual may reach slightly past
    // the body box, so demand 95% rather than all.
    CHECK(static_cast<double>(inside) / static_cast<double>(changed) >= 0.95);
  }
}

TEST_CASE("empirical face-visible rate tracks the configured probability") {
  SceneConfig cfg = tiny_config();
  cfg.train_frames = 2000;
  cfg.test_frames = 0;
  cfg.face_visibility = 0.4;
  auto specs = generate_individual_specs(cfg.num_identities, cfg.master_seed);
  SceneSampler sampler(cfg);
  Rng pick(5);
  long long visible = 0, total = 0;
  int scenes = cfg.train_frames / cfg.burst_len;
  for (int s = 0; s < scenes; ++s) {
    std::vector<int> ids;
    for (int i = 0; i < cfg.num_identities; ++i)
      if (pick.bernoulli(0.5)) ids.push_back(i);
    scene::Scene sc = sampler.sample(s, "train", ids);
    for (const auto& p : sc.individuals) {
      total += 1;
      visible += p.face_visible ? 1 : 0;
    }
  }
  double rate = static_cast<double>(visible) / static_cast<double>(total);
  CHECK(rate == doctest::Approx(0.4).epsilon(0.075));  // within +-3 points
}

TEST_CASE("generate_dataset: byte-identical regeneration, consistent labels, f_i >= 1") {
  SceneConfig cfg = tiny_config();
  TmpDir da("ccr_synth_a"), db("ccr_synth_b");
  DatasetSummary sa = generate_dataset(cfg, da.path.string(), 2);
  DatasetSummary sb = generate_dataset(cfg, db.path.string(), 1);

  CHECK(sa.train_frames == cfg.train_frames);
  CHECK(sa.test_frames == cfg.test_frames);
  for (int f : sa.train_instance_counts) CHECK(f >= 1);
  for (int f : sa.test_instance_counts) CHECK(f >= 1);

  // Different thread counts, identical bytes.
  CHECK(read_file(da.path / "manifest.jsonl") == read_file(db.path / "manifest.jsonl"));
  auto records = load_manifest((da.path / "manifest.jsonl").string());
  REQUIRE(static_cast<int>(records.size()) == cfg.train_frames + cfg.test_frames);
  for (const auto& r : records) {
    int n = 0;
    for (int v : r.y) n += v;
    CHECK(n == r.n);
    CHECK(static_cast<int>(r.body_boxes.size()) == n);
    for (const auto& b : r.body_boxes) {
      CHECK(r.y[b.id] == 1);
      CHECK(b.x0 >= 0);
      CHECK(b.x1 <= cfg.image_side);
      CHECK(b.x0 < b.x1);
      CHECK(b.y0 < b.y1);
    }
    for (const auto& fb : r.face_boxes) CHECK(fb.visible);
    CHECK(read_file(da.path / r.path) == read_file(db.path / r.path));
    CHECK(!read_file(da.path / r.path).empty());
  }

  // Train/test split disjoint by frame id.
  std::set<std::int64_t> train_ids, test_ids;
  for (const auto& r : records) (r.split == "train" ? train_ids : test_ids).insert(r.frame_id);
  for (auto id : test_ids) CHECK(!train_ids.count(id));
}

TEST_CASE("resolution gap: markings keep their contrast after crop, lose it after full resize") {
  SceneConfig cfg = tiny_config();
  cfg.image_side = 256;
  auto specs = generate_individual_specs(cfg.num_identities, cfg.master_seed);
  SceneSampler sampler(cfg);
  const int net_side = 64;
  double crop_var_sum = 0.0, full_var_sum = 0.0;
  int measured = 0;
  for (int s = 0; s < 24; ++s) {
    scene::Scene sc = sampler.sample(s, "train", {s % cfg.num_identities});
    auto [img, rec] = render_scene_frame(specs, cfg, sc, 0, s);
    REQUIRE(rec.body_boxes.size() == 1);
    const PartBox& gt = rec.body_boxes[0];
    const IndividualSpec& spec = specs[static_cast<std::size_t>(gt.id)];
    const auto& placed = sc.individuals[0];
    double ct = std::cos(placed.theta), st = std::sin(placed.theta);
    double mx = placed.cx + placed.drift[0].first + ct * spec.marking_u * placed.a - st * spec.marking_v * placed.b;
    double my = placed.cy + placed.drift[0].second + st * spec.marking_u * placed.a + ct * spec.marking_v * placed.b;

    auto variance_in = [&](const Tensor& im, double cx, double cy, double r) {
      double mean[3] = {0, 0, 0};
      int cnt = 0;
      int x0 = std::max(0, static_cast<int>(cx - r)), x1 = std::min(im.dim(2) - 1, static_cast<int>(cx + r));
      int y0 = std::max(0, static_cast<int>(cy - r)), y1 = std::min(im.dim(1) - 1, static_cast<int>(cy + r));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          for (int c = 0; c < 3; ++c) mean[c] += im.at(c, y, x);
          ++cnt;
        }
      if (cnt < 2) return 0.0;
      for (double& m : mean) m /= cnt;
      double var = 0.0;
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
          for (int c = 0; c < 3; ++c) {
            double d = im.at(c, y, x) - mean[c];
            var += d * d;
          }
      return var / (3.0 * cnt);
    };

    // Crop route: gt body crop resized to the net input.
    BBox gt_box{gt.x0, gt.y0, gt.x1, gt.y1};
    Tensor crop = crop_resize(img, gt_box, net_side);
    double sx_crop = static_cast<double>(net_side) / gt_box.width();
    double sy_crop = static_cast<double>(net_side) / gt_box.height();
    double r_crop = spec.marking_radius * std::min(sx_crop, sy_crop);
    crop_var_sum += variance_in(crop, (mx - gt_box.x0) * sx_crop, (my - gt_box.y0) * sy_crop,
                                std::max(1.5, r_crop));

    // Full-frame route.
    Tensor full = resize_bilinear(img, net_side, net_side);
    double sf = static_cast<double>(net_side) / cfg.image_side;
    full_var_sum += variance_in(full, mx * sf, my * sf, std::max(1.5, spec.marking_radius * sf));
    ++measured;
  }
  REQUIRE(measured > 0);
  // The physical premise of the pipeline: at least a 2x variance gap.
  CHECK(crop_var_sum / full_var_sum > 2.0);
}

TEST_CASE("ppm/pgm roundtrip is exact at 8-bit resolution") {
  TmpDir dir("ccr_pnm");
  Tensor img({3, 5, 7});
  Rng rng(3);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.below_int(256) / 255.0;
  write_ppm((dir.path / "t.ppm").string(), img);
  Tensor back = read_ppm((dir.path / "t.ppm").string());
  REQUIRE(back.shape() == img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == doctest::Approx(img[i]).epsilon(1e-12));

  Tensor grey({4, 6});
  for (std::size_t i = 0; i < grey.size(); ++i) grey[i] = rng.below_int(256) / 255.0;
  write_pgm((dir.path / "t.pgm").string(), grey);
  Tensor gback = read_pgm((dir.path / "t.pgm").string());
  for (std::size_t i = 0; i < grey.size(); ++i) CHECK(gback[i] == doctest::Approx(grey[i]).epsilon(1e-12));
}
