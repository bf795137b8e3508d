#pragma once

// Independent reference implementations used only by tests. Each one takes a
// deliberately different route from the production code: naive nested loops
// for convolution, central finite differences for gradients, recursive flood
// fill for component labelling and an O(n^2) re-summing walk for AP.

#include <cmath>
#include <functional>
#include <vector>

#include "ccr/proposal.hpp"
#include "ccr/tensor.hpp"

namespace oracle {

// Direct six-nested-loop cross-correlation.
inline ccr::Tensor conv2d_naive(const ccr::Tensor& input, const ccr::Tensor& kernels,
                                const ccr::Tensor& bias, int stride, int pad) {
  const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int cout = kernels.dim(0), k = kernels.dim(2);
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (w + 2 * pad - k) / stride + 1;
  ccr::Tensor out({cout, oh, ow});
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias[static_cast<std::size_t>(co)];
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              int iy = oy * stride - pad + ky;
              int ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += kernels.at(co, ci, ky, kx) * input.at(ci, iy, ix);
            }
        out.at(co, oy, ox) = acc;
      }
  return out;
}

// Central finite differences of a scalar function at every coordinate of x.
inline ccr::Tensor finite_diff(const std::function<double(const ccr::Tensor&)>& f, ccr::Tensor x,
                               double eps = 1e-5) {
  ccr::Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    double hi = f(x);
    x[i] = orig - eps;
    double lo = f(x);
    x[i] = orig;
    g[i] = (hi - lo) / (2.0 * eps);
  }
  return g;
}

// Max relative error between an analytic gradient and its finite-difference
// estimate.
inline double max_rel_error(const ccr::Tensor& analytic, const ccr::Tensor& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    double denom = std::max({1e-6, std::fabs(analytic[i]), std::fabs(numeric[i])});
    worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

// Stack-based 8-connectivity flood fill.
inline std::vector<int> flood_fill_components(const ccr::BinaryMask& mask) {
  std::vector<int> labels(mask.v.size(), 0);
  int next = 0;
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) {
      std::size_t i = static_cast<std::size_t>(y) * mask.w + x;
      if (!mask.v[i] || labels[i]) continue;
      ++next;
      std::vector<std::pair<int, int>> stack{{y, x}};
      labels[i] = next;
      while (!stack.empty()) {
        auto [cy, cx] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || nx < 0 || ny >= mask.h || nx >= mask.w) continue;
            std::size_t ni = static_cast<std::size_t>(ny) * mask.w + nx;
            if (!mask.v[ni] || labels[ni]) continue;
            labels[ni] = next;
            stack.emplace_back(ny, nx);
          }
      }
    }
  return labels;
}

// True iff two labelings induce the same partition of foreground pixels.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::vector<int> a2b, b2a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] == 0) != (b[i] == 0)) return false;
    if (a[i] == 0) continue;
    if (static_cast<std::size_t>(a[i]) >= a2b.size()) a2b.resize(a[i] + 1, -1);
    if (static_cast<std::size_t>(b[i]) >= b2a.size()) b2a.resize(b[i] + 1, -1);
    if (a2b[a[i]] == -1) a2b[a[i]] = b[i];
    if (b2a[b[i]] == -1) b2a[b[i]] = a[i];
    if (a2b[a[i]] != b[i] || b2a[b[i]] != a[i]) return false;
  }
  return true;
}

struct ApUnit {
  double score = 0.0;
  bool relevant = false;
  double weight = 1.0;
};

// Brute-force AP walk: selection-sort the ranking (stable on ties), then
// recompute precision at each relevant unit by re-summing from the start.
inline double ap_brute_force(std::vector<ApUnit> units, double total_positive_weight) {
  std::vector<ApUnit> ranked;
  std::vector<bool> used(units.size(), false);
  for (std::size_t n = 0; n < units.size(); ++n) {
    std::size_t best = units.size();
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (used[i]) continue;
      if (best == units.size() || units[i].score > units[best].score) best = i;
    }
    used[best] = true;
    ranked.push_back(units[best]);
  }
  double ap = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (!ranked[i].relevant) continue;
    double rel = 0.0, tot = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      tot += ranked[j].weight;
      if (ranked[j].relevant) rel += ranked[j].weight;
    }
    ap += ranked[i].weight * (rel / tot);
  }
  return ap / total_positive_weight;
}

}  // namespace oracle
