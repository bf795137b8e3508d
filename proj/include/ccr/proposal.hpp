#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "ccr/image.hpp"
#include "ccr/model.hpp"
#include "ccr/tensor.hpp"

namespace ccr {

// Inclusive-exclusive pixel rectangle [x0,x1) x [y0,y1).
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long long area() const { return static_cast<long long>(width()) * height(); }
  bool valid_for(int w, int h) const {
    return 0 <= x0 && x0 < x1 && x1 <= w && 0 <= y0 && y0 < y1 && y1 <= h;
  }
  bool operator==(const BBox& o) const {
    return x0 == o.x0 && y0 == o.y0 && x1 == o.x1 && y1 == o.y1;
  }
};

struct BinaryMask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> v;  // 0 or 1, row-major

  std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

// (M - min M) / (max M); a constant map becomes all zeros rather than
// dividing by zero.
inline Tensor normalize_cam(const CamMap& cam) {
  require_ndim(cam.grid, 2, "normalize_cam grid");
  Tensor out(cam.grid.shape());
  double lo = cam.grid.min(), hi = cam.grid.max();
  if (hi == lo) return out;
  // True division so the max lands exactly on 1.0.
  double range = hi - lo;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (cam.grid[i] - lo) / range;
  return out;
}

// Corner-aligned bilinear upsampling; the h==H, w==W case is an exact identity.
inline Tensor upsample_cam(const Tensor& norm, int h, int w) {
  require_ndim(norm, 2, "upsample_cam grid");
  if (h < norm.dim(0) || w < norm.dim(1)) {
    throw ShapeError("upsample_cam: target " + std::to_string(w) + "x" + std::to_string(h) +
                     " smaller than source " + shape_to_string(norm.shape()));
  }
  return resize_bilinear(norm, h, w);
}

// Strict inequality: 1 where value > T.
inline BinaryMask threshold_cam(const Tensor& norm, double threshold) {
  require_ndim(norm, 2, "threshold_cam grid");
  if (threshold < 0.0 || threshold > 1.0) {
    throw std::invalid_argument("threshold_cam: T must be in [0,1], got " + std::to_string(threshold));
  }
  BinaryMask m;
  m.h = norm.dim(0);
  m.w = norm.dim(1);
  m.v.resize(norm.size());
  for (std::size_t i = 0; i < norm.size(); ++i) m.v[i] = norm[i] > threshold ? 1 : 0;
  return m;
}

// Two-pass 8-connectivity labelling with union-find. Output labels are
// 1..count in first-encounter raster order, 0 for background.
struct Components {
  int h = 0, w = 0;
  int count = 0;
  std::vector<int> labels;          // same layout as the mask
  std::vector<long long> sizes;     // sizes[k] = pixels of component k+1

  int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * w + x]; }
};

namespace detail {

struct UnionFind {
  std::vector<int> parent;

  int make() {
    parent.push_back(static_cast<int>(parent.size()));
    return static_cast<int>(parent.size()) - 1;
  }
  int find(int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    // Keep the smaller provisional label as root so final numbering follows
    // raster order.
    if (a < b) parent[b] = a;
    else parent[a] = b;
  }
};

}  // namespace detail

inline Components connected_components(const BinaryMask& mask) {
  Components c;
  c.h = mask.h;
  c.w = mask.w;
  c.labels.assign(mask.v.size(), 0);
  if (mask.h == 0 || mask.w == 0) return c;

  detail::UnionFind uf;
  uf.make();  // provisional 0 = background, never united
  std::vector<int> prov(mask.v.size(), 0);

  for (int y = 0; y < mask.h; ++y) {
    for (int x = 0; x < mask.w; ++x) {
      if (!mask.at(y, x)) continue;
      const std::size_t i = static_cast<std::size_t>(y) * mask.w + x;
      int label = 0;
      auto consider = [&](int ny, int nx) {
        if (ny < 0 || nx < 0 || nx >= mask.w) return;
        int nl = prov[static_cast<std::size_t>(ny) * mask.w + nx];
        if (!nl) return;
        if (!label) label = nl;
        else if (label != nl) uf.unite(label, nl);
      };
      consider(y, x - 1);
      consider(y - 1, x - 1);
      consider(y - 1, x);
      consider(y - 1, x + 1);
      if (!label) label = uf.make();
      prov[i] = label;
    }
  }

  // Second pass: compress and renumber roots in raster order of first
  // appearance.
  std::vector<int> remap(uf.parent.size(), 0);
  for (int y = 0; y < mask.h; ++y) {
    for (int x = 0; x < mask.w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * mask.w + x;
      if (!prov[i]) continue;
      int root = uf.find(prov[i]);
      if (!remap[static_cast<std::size_t>(root)]) {
        remap[static_cast<std::size_t>(root)] = ++c.count;
        c.sizes.push_back(0);
      }
      c.labels[i] = remap[static_cast<std::size_t>(root)];
      ++c.sizes[static_cast<std::size_t>(c.labels[i]) - 1];
    }
  }
  return c;
}

// Tight bbox of the largest component; size ties go to the smallest label
// (raster-first). An empty mask degrades to the full frame.
inline BBox largest_component_bbox(const BinaryMask& mask) {
  Components c = connected_components(mask);
  if (c.count == 0) return BBox{0, 0, mask.w, mask.h};
  int best = 0;
  for (int k = 1; k < c.count; ++k)
    if (c.sizes[static_cast<std::size_t>(k)] > c.sizes[static_cast<std::size_t>(best)]) best = k;
  BBox box{mask.w, mask.h, 0, 0};
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x)
      if (c.at(y, x) == best + 1) {
        box.x0 = std::min(box.x0, x);
        box.y0 = std::min(box.y0, y);
        box.x1 = std::max(box.x1, x + 1);
        box.y1 = std::max(box.y1, y + 1);
      }
  return box;
}

// Crop from the full-resolution image, then bilinear resize to S x S. Aspect
// ratio is not preserved.
inline Tensor crop_resize(const Tensor& image, const BBox& box, int side) {
  require_ndim(image, 3, "crop_resize image");
  const int h = image.dim(1), w = image.dim(2);
  if (!box.valid_for(w, h)) {
    throw ShapeError("crop_resize: bbox [" + std::to_string(box.x0) + "," + std::to_string(box.x1) +
                     ")x[" + std::to_string(box.y0) + "," + std::to_string(box.y1) +
                     ") invalid for " + std::to_string(w) + "x" + std::to_string(h) + " image");
  }
  const int c = image.dim(0);
  Tensor crop({c, box.height(), box.width()});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < box.height(); ++y)
      for (int x = 0; x < box.width(); ++x)
        crop.at(ch, y, x) = image.at(ch, box.y0 + y, box.x0 + x);
  return resize_bilinear(crop, side, side);
}

struct Proposal {
  BBox box;      // in full-resolution pixel coordinates
  CamMap cam;    // raw CAM of the selected class
  int n_hat = 0; // predicted count bin (or argmax identity for a recognition net)
};

// CAM -> normalize -> upsample to (h, w) -> threshold -> largest component.
inline BBox cam_to_bbox(const CamMap& cam, int h, int w, double threshold) {
  Tensor norm = normalize_cam(cam);
  Tensor up = upsample_cam(norm, h, w);
  BinaryMask mask = threshold_cam(up, threshold);
  return largest_component_bbox(mask);
}

// The Crop stage. The net sees the frame resized to its input side; the
// selected class's CAM is upsampled to the frame's full resolution and the
// largest supra-threshold component gives the crop box. A predicted count of
// zero (count heads only) degrades to the full frame, as does an empty mask.
inline Proposal propose_region(const CamNet& net, const Tensor& full_image, double threshold) {
  require_ndim(full_image, 3, "propose_region image");
  const int h = full_image.dim(1), w = full_image.dim(2);
  Tensor small = resize_bilinear(full_image, net.config().input_side, net.config().input_side);
  CamNet::Activations a = net.forward(small);
  int cls = CamNet::argmax_lowest(a.logits);
  Proposal p;
  p.n_hat = cls;
  p.cam = net.cam(a.features, cls);
  if (net.head_kind() == HeadKind::kCount && cls == 0) {
    p.box = BBox{0, 0, w, h};
    return p;
  }
  p.box = cam_to_bbox(p.cam, h, w, threshold);
  return p;
}

struct Localisation {
  int identity = 0;
  BBox box;
  double cx = 0.0, cy = 0.0;  // bbox center, in the same pixel coordinates
};

inline Localisation localise_from_cam(const CamMap& cam, int h, int w, double threshold, int identity) {
  Localisation loc;
  loc.identity = identity;
  loc.box = cam_to_bbox(cam, h, w, threshold);
  loc.cx = 0.5 * (loc.box.x0 + loc.box.x1);
  loc.cy = 0.5 * (loc.box.y0 + loc.box.y1);
  return loc;
}

// Per-identity CAM -> bbox -> centroid, computed on the given (usually
// cropped full-resolution) image.
inline std::vector<Localisation> localise_individuals(const CamNet& net, const Tensor& image,
                                                      const std::vector<int>& identities,
                                                      double threshold) {
  require_ndim(image, 3, "localise_individuals image");
  const int h = image.dim(1), w = image.dim(2);
  Tensor small = resize_bilinear(image, net.config().input_side, net.config().input_side);
  CamNet::Activations a = net.forward(small);
  std::vector<Localisation> out;
  out.reserve(identities.size());
  for (int id : identities) {
    out.push_back(localise_from_cam(net.cam(a.features, id), h, w, threshold, id));
  }
  return out;
}

}  // namespace ccr
