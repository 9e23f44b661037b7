#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/rng.hpp"

namespace neustrom {

/// Dimension list. Rank 0 is a scalar, rank 1 a vector, rank 2 a matrix
/// (row-major). Nothing in this library needs rank 3+.
using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

/// Dense 64-bit float array, the universal value type. Values are row-major.
/// `grad_enabled` marks tensors that act as trainable leaves when bound to a
/// tape; it has no effect on plain host-side math.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool grad_enabled = false)
      : shape_(std::move(shape)), values_(std::move(values)), grad_enabled_(grad_enabled) {
    if (numel(shape_) != static_cast<int64_t>(values_.size()))
      throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " does not match " +
                                  std::to_string(values_.size()) + " values");
  }

  static Tensor zeros(Shape shape) {
    std::vector<double> v(static_cast<size_t>(numel(shape)), 0.0);
    return Tensor(std::move(shape), std::move(v));
  }
  static Tensor full(Shape shape, double value) {
    std::vector<double> v(static_cast<size_t>(numel(shape)), value);
    return Tensor(std::move(shape), std::move(v));
  }
  static Tensor scalar(double value) { return Tensor({}, {value}); }
  static Tensor identity(int n) {
    Tensor t = zeros({n, n});
    for (int i = 0; i < n; ++i) t.values_[static_cast<size_t>(i) * n + i] = 1.0;
    return t;
  }
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(numel(shape)));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v));
  }
  static Tensor gaussian(Shape shape, double stddev, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(numel(shape)));
    for (double& x : v) x = stddev * rng.gaussian();
    return Tensor(std::move(shape), std::move(v));
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(values_.size()); }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  const double* data() const { return values_.data(); }
  double* data() { return values_.data(); }

  double operator[](int64_t i) const { return values_[static_cast<size_t>(i)]; }
  double& operator[](int64_t i) { return values_[static_cast<size_t>(i)]; }
  /// Rank-2 element access.
  double at(int r, int c) const { return values_[static_cast<size_t>(r) * shape_[1] + c]; }
  double& at(int r, int c) { return values_[static_cast<size_t>(r) * shape_[1] + c]; }

  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_values(const Tensor& other) const {
    return shape_ == other.shape_ && values_ == other.values_;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
  bool grad_enabled_ = false;
};

}  // namespace neustrom
