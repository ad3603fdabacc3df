#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "spikefool/common.hpp"

namespace spikefool {

// Dense row-major tensor of doubles. Rasters, activations, weights and
// gradients all use this one type; rank is carried in the shape vector.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}
  Tensor(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (int64_t(data_.size()) != count(shape_))
      throw ValidationError("tensor data size does not match shape");
  }

  static int64_t count(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw ValidationError("negative tensor dimension");
      n *= d;
    }
    return n;
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[size_t(i)]; }
  int rank() const { return int(shape_.size()); }
  int64_t size() const { return int64_t(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[size_t(i)]; }
  double operator[](int64_t i) const { return data_[size_t(i)]; }

  // [T,P,H,W] indexing; also used for [C,H,W] via at3.
  double& at4(int t, int p, int y, int x) {
    return data_[size_t(((int64_t(t) * shape_[1] + p) * shape_[2] + y) * shape_[3] + x)];
  }
  double at4(int t, int p, int y, int x) const {
    return data_[size_t(((int64_t(t) * shape_[1] + p) * shape_[2] + y) * shape_[3] + x)];
  }
  double& at3(int c, int y, int x) {
    return data_[size_t((int64_t(c) * shape_[1] + y) * shape_[2] + x)];
  }
  double at3(int c, int y, int x) const {
    return data_[size_t((int64_t(c) * shape_[1] + y) * shape_[2] + x)];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool integer_valued() const {
    for (double v : data_)
      if (v != std::floor(v)) return false;
    return true;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

inline int64_t l0_distance(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ValidationError("l0_distance: shape mismatch");
  int64_t n = 0;
  for (int64_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) ++n;
  return n;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

}  // namespace spikefool
