#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccr {

// Thrown whenever an operation receives tensors whose dimensions do not fit.
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

inline std::string shape_to_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major tensor of 64-bit floats. Plain value type: copying copies
// the data, all layer ops are free functions over it.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(count(shape_), 0.0);
  }

  Tensor(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_to_string(shape_));
    }
  }

  static Tensor full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Indexed access for the common ranks.
  double& at(int i, int j) { return data_[idx2(i, j)]; }
  double at(int i, int j) const { return data_[idx2(i, j)]; }
  double& at(int c, int y, int x) { return data_[idx3(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[idx3(c, y, x)]; }
  double& at(int o, int c, int y, int x) { return data_[idx4(o, c, y, x)]; }
  double at(int o, int c, int y, int x) const { return data_[idx4(o, c, y, x)]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  double min() const { return *std::min_element(data_.begin(), data_.end()); }
  double max() const { return *std::max_element(data_.begin(), data_.end()); }

  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static std::size_t count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw ShapeError("negative dimension in shape " + shape_to_string(shape));
      n *= static_cast<std::size_t>(d);
    }
    return shape.empty() ? 0 : n;
  }

 private:
  std::size_t idx2(int i, int j) const {
    return static_cast<std::size_t>(i) * shape_[1] + j;
  }
  std::size_t idx3(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x;
  }
  std::size_t idx4(int o, int c, int y, int x) const {
    return ((static_cast<std::size_t>(o) * shape_[1] + c) * static_cast<std::size_t>(shape_[2]) + y) *
               shape_[3] +
           x;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

inline void require_shape(const Tensor& t, const std::vector<int>& expect, const char* what) {
  if (t.shape() != expect) {
    throw ShapeError(std::string(what) + ": expected shape " + shape_to_string(expect) +
                     ", got " + shape_to_string(t.shape()));
  }
}

inline void require_ndim(const Tensor& t, int ndim, const char* what) {
  if (t.ndim() != ndim) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(ndim) +
                     " dims, got shape " + shape_to_string(t.shape()));
  }
}

}  // namespace ccr
