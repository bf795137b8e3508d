#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ccr/proposal.hpp"
#include "ccr/rng.hpp"
#include "oracles.hpp"

using namespace ccr;

namespace {

CamMap make_cam(int h, int w, std::vector<double> values) {
  CamMap m;
  m.grid = Tensor({h, w}, std::move(values));
  return m;
}

BinaryMask make_mask(int h, int w, std::vector<std::uint8_t> values) {
  BinaryMask m;
  m.h = h;
  m.w = w;
  m.v = std::move(values);
  return m;
}

}  // namespace

TEST_CASE("normalize_cam: affine map, degenerate constant, exact range") {
  CamMap cam = make_cam(2, 2, {0, 1, 2, 3});
  Tensor n = normalize_cam(cam);
  CHECK(n[0] == doctest::Approx(0.0));
  CHECK(n[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(n[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(n[3] == doctest::Approx(1.0));

  Tensor flat = normalize_cam(make_cam(3, 3, std::vector<double>(9, 4.2)));
  for (std::size_t i = 0; i < flat.size(); ++i) CHECK(flat[i] == 0.0);

  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> vals(12);
    for (auto& v : vals) v = rng.uniform(-5, 5);
    vals[1] = vals[0] + 1.0;  // guarantee non-constant
    Tensor norm = normalize_cam(make_cam(3, 4, vals));
    CHECK(norm.min() == 0.0);
    CHECK(norm.max() == 1.0);
  }
}

TEST_CASE("upsample_cam: identity, constants, and the hand bilinear center") {
  Tensor grid({2, 2}, {0, 1, 1, 0});
  Tensor same = upsample_cam(grid, 2, 2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(same[i] == grid[i]);

  Tensor constant = upsample_cam(Tensor::full({2, 2}, 0.7), 9, 5);
  for (std::size_t i = 0; i < constant.size(); ++i) CHECK(constant[i] == doctest::Approx(0.7));

  Tensor up = upsample_cam(grid, 3, 3);
  CHECK(up.at(1, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(up.at(0, 0) == 0.0);
  CHECK(up.at(0, 2) == 1.0);
  // Bilinear output stays inside the input range.
  CHECK(up.min() >= 0.0);
  CHECK(up.max() <= 1.0);

  CHECK_THROWS_AS(upsample_cam(grid, 1, 3), ShapeError);
}

TEST_CASE("threshold_cam: strict inequality and monotonicity in T") {
  Tensor norm({2, 2}, {0.4, 0.6, 0.5, 1.0});
  BinaryMask m = threshold_cam(norm, 0.5);
  CHECK(m.at(0, 0) == 0);
  CHECK(m.at(0, 1) == 1);
  CHECK(m.at(1, 0) == 0);  // exactly T stays off
  CHECK(m.at(1, 1) == 1);

  CHECK_THROWS_AS(threshold_cam(norm, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(threshold_cam(norm, -0.1), std::invalid_argument);

  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> vals(25);
    for (auto& v : vals) v = rng.uniform();
    Tensor g({5, 5}, vals);
    double t1 = rng.uniform(), t2 = rng.uniform();
    if (t1 > t2) std::swap(t1, t2);
    BinaryMask lo = threshold_cam(g, t1), hi = threshold_cam(g, t2);
    for (std::size_t i = 0; i < lo.v.size(); ++i) CHECK(hi.v[i] <= lo.v[i]);
  }
}

TEST_CASE("connected_components: empty mask, diagonal touch, raster label order") {
  Components none = connected_components(make_mask(3, 3, std::vector<std::uint8_t>(9, 0)));
  CHECK(none.count == 0);

  // Two pixels touching only diagonally form one component under
  // 8-connectivity.
  Components diag = connected_components(make_mask(2, 2, {1, 0, 0, 1}));
  CHECK(diag.count == 1);
  CHECK(diag.sizes[0] == 2);

  Components two = connected_components(make_mask(1, 5, {1, 1, 0, 1, 1}));
  CHECK(two.count == 2);
  CHECK(two.at(0, 0) == 1);
  CHECK(two.at(0, 3) == 2);
}

TEST_CASE("connected_components matches the flood-fill oracle on 500 random masks") {
  Rng rng(4242);
  for (int trial = 0; trial < 500; ++trial) {
    BinaryMask mask;
    mask.h = 16;
    mask.w = 16;
    mask.v.resize(256);
    double density = rng.uniform(0.2, 0.8);
    for (auto& v : mask.v) v = rng.bernoulli(density) ? 1 : 0;
    Components got = connected_components(mask);
    std::vector<int> expect = oracle::flood_fill_components(mask);
    REQUIRE(oracle::same_partition(got.labels, expect));
    // Per-component sizes must agree with a recount.
    std::vector<long long> recount(got.count, 0);
    for (int l : got.labels)
      if (l) ++recount[l - 1];
    CHECK(recount == got.sizes);
  }
}

TEST_CASE("largest_component_bbox: single pixel, fallback, and oracle-checked winner") {
  BinaryMask single = make_mask(4, 5, std::vector<std::uint8_t>(20, 0));
  single.v[2 * 5 + 3] = 1;  // pixel at row 2, col 3
  BBox b = largest_component_bbox(single);
  CHECK(b == BBox{3, 2, 4, 3});

  BBox empty = largest_component_bbox(make_mask(4, 5, std::vector<std::uint8_t>(20, 0)));
  CHECK(empty == BBox{0, 0, 5, 4});

  // Components of size 5 and 9.
  BinaryMask mask = make_mask(6, 8, std::vector<std::uint8_t>(48, 0));
  for (int x = 0; x < 5; ++x) mask.v[0 * 8 + x] = 1;           // 1x5 strip
  for (int y = 3; y < 6; ++y)
    for (int x = 5; x < 8; ++x) mask.v[y * 8 + x] = 1;         // 3x3 block
  BBox big = largest_component_bbox(mask);
  CHECK(big == BBox{5, 3, 8, 6});

  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    BinaryMask m;
    m.h = 12;
    m.w = 12;
    m.v.resize(144);
    for (auto& v : m.v) v = rng.bernoulli(0.35) ? 1 : 0;
    BBox got = largest_component_bbox(m);
    std::vector<int> labels = oracle::flood_fill_components(m);
    int comps = 0;
    for (int l : labels) comps = std::max(comps, l);
    if (comps == 0) {
      CHECK(got == BBox{0, 0, 12, 12});
      continue;
    }
    std::vector<long long> sizes(comps, 0);
    for (int l : labels)
      if (l) ++sizes[l - 1];
    long long best = *std::max_element(sizes.begin(), sizes.end());
    // The chosen box must exactly bound SOME maximal component.
    bool matched = false;
    for (int c = 0; c < comps; ++c) {
      if (sizes[c] != best) continue;
      BBox cb{12, 12, 0, 0};
      for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x)
          if (labels[y * 12 + x] == c + 1) {
            cb.x0 = std::min(cb.x0, x);
            cb.y0 = std::min(cb.y0, y);
            cb.x1 = std::max(cb.x1, x + 1);
            cb.y1 = std::max(cb.y1, y + 1);
          }
      if (cb == got) matched = true;
    }
    CHECK(matched);
  }
}

TEST_CASE("crop_resize: identity, one-pixel box, invalid boxes") {
  Rng rng(9);
  Tensor img({3, 6, 6});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  Tensor same = crop_resize(img, BBox{0, 0, 6, 6}, 6);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(same[i] == img[i]);

  Tensor one = crop_resize(img, BBox{2, 3, 3, 4}, 4);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) CHECK(one.at(c, y, x) == img.at(c, 3, 2));

  CHECK_THROWS_AS(crop_resize(img, BBox{4, 0, 3, 2}, 4), ShapeError);
  CHECK_THROWS_AS(crop_resize(img, BBox{0, 0, 7, 6}, 4), ShapeError);
}

TEST_CASE("propose_region: degenerate net falls back to the full frame") {
  ModelConfig cfg;
  cfg.input_side = 32;
  cfg.channels = {4, 8};
  cfg.num_classes = 4;
  cfg.seed = 5;
  CamNet net(cfg, HeadKind::kCount);
  Checkpoint c = net.to_checkpoint();
  for (auto& nt : c.tensors) {
    if (nt.name == "head.weight") nt.tensor.fill(0.0);
    if (nt.name == "head.bias") nt.tensor.fill(0.0);
  }
  CamNet zeroed = CamNet::from_checkpoint(c);
  Rng rng(11);
  Tensor img({3, 64, 64});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  Proposal p = propose_region(zeroed, img, 0.5);
  CHECK(p.n_hat == 0);  // zero logits tie-break to class 0
  CHECK(p.box == BBox{0, 0, 64, 64});
}

TEST_CASE("localisation: constant CAM gives frame center, split blobs give disjoint boxes") {
  CamMap flat = make_cam(4, 4, std::vector<double>(16, 1.0));
  Localisation loc = localise_from_cam(flat, 40, 60, 0.5, 2);
  CHECK(loc.identity == 2);
  CHECK(loc.box == BBox{0, 0, 60, 40});
  CHECK(loc.cx == doctest::Approx(30.0));
  CHECK(loc.cy == doctest::Approx(20.0));

  // Two identities peaking in opposite corners localise to disjoint boxes.
  std::vector<double> a(64, 0.0), b(64, 0.0);
  a[0 * 8 + 1] = 1.0;
  b[7 * 8 + 6] = 1.0;
  Localisation la = localise_from_cam(make_cam(8, 8, a), 64, 64, 0.5, 0);
  Localisation lb = localise_from_cam(make_cam(8, 8, b), 64, 64, 0.5, 1);
  bool disjoint = la.box.x1 <= lb.box.x0 || lb.box.x1 <= la.box.x0 || la.box.y1 <= lb.box.y0 ||
                  lb.box.y1 <= la.box.y0;
  CHECK(disjoint);
  CHECK(la.cx < lb.cx);
  CHECK(la.cy < lb.cy);
}

TEST_CASE("full chain is deterministic") {
  ModelConfig cfg;
  cfg.input_side = 32;
  cfg.channels = {4, 8};
  cfg.num_classes = 4;
  cfg.seed = 17;
  CamNet net(cfg, HeadKind::kCount);
  Rng rng(13);
  Tensor img({3, 96, 96});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  Proposal p1 = propose_region(net, img, 0.5);
  Proposal p2 = propose_region(net, img, 0.5);
  CHECK(p1.box == p2.box);
  CHECK(p1.n_hat == p2.n_hat);
  CHECK(p1.box.valid_for(96, 96));
  CHECK(p1.box.area() > 0);
}
