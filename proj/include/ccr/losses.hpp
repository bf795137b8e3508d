#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ccr/tensor.hpp"

namespace ccr {

struct LossGrad {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits
};

// loss = -log softmax(logits)[target], stabilized by max subtraction.
inline LossGrad softmax_cross_entropy(const Tensor& logits, int target) {
  require_ndim(logits, 1, "softmax_cross_entropy logits");
  const int k = logits.dim(0);
  if (target < 0 || target >= k) {
    throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(target) +
                            " out of range [0," + std::to_string(k) + ")");
  }
  double m = logits.max();
  double z = 0.0;
  Tensor p({k});
  for (int i = 0; i < k; ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(logits[static_cast<std::size_t>(i)] - m);
    z += p[static_cast<std::size_t>(i)];
  }
  LossGrad out;
  out.loss = -(logits[static_cast<std::size_t>(target)] - m - std::log(z));
  out.grad = Tensor({k});
  for (int i = 0; i < k; ++i) {
    out.grad[static_cast<std::size_t>(i)] = p[static_cast<std::size_t>(i)] / z - (i == target ? 1.0 : 0.0);
  }
  return out;
}

inline Tensor softmax(const Tensor& logits) {
  require_ndim(logits, 1, "softmax logits");
  const int k = logits.dim(0);
  double m = logits.max();
  Tensor p({k});
  double z = 0.0;
  for (int i = 0; i < k; ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(logits[static_cast<std::size_t>(i)] - m);
    z += p[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < k; ++i) p[static_cast<std::size_t>(i)] /= z;
  return p;
}

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// Mean over classes of w_i * BCE(sigmoid(z_i), y_i); the weight scales both
// the positive and the negative term of its class. Stable log-sum-exp form:
// BCE(z, y) = max(z, 0) - z*y + log(1 + exp(-|z|)).
inline LossGrad weighted_bce(const Tensor& logits, const std::vector<int>& targets,
                             const Tensor& class_weights) {
  require_ndim(logits, 1, "weighted_bce logits");
  const int k = logits.dim(0);
  if (static_cast<int>(targets.size()) != k) {
    throw ShapeError("weighted_bce: targets size " + std::to_string(targets.size()) +
                     " != logits dim " + std::to_string(k));
  }
  require_shape(class_weights, {k}, "weighted_bce class_weights");
  for (int i = 0; i < k; ++i) {
    if (!(class_weights[static_cast<std::size_t>(i)] > 0.0)) {
      throw std::invalid_argument("weighted_bce: class weight " + std::to_string(i) +
                                  " must be positive");
    }
  }
  LossGrad out;
  out.grad = Tensor({k});
  const double invk = 1.0 / k;
  for (int i = 0; i < k; ++i) {
    const double z = logits[static_cast<std::size_t>(i)];
    const double y = targets[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    const double w = class_weights[static_cast<std::size_t>(i)];
    const double bce = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    out.loss += w * bce * invk;
    out.grad[static_cast<std::size_t>(i)] = w * (sigmoid(z) - y) * invk;
  }
  return out;
}

}  // namespace ccr
