#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fer/common.hpp"

namespace fer {

/// Dense n-dimensional array of doubles, row-major. Extents are always
/// positive; the element count is the product of the extents. Compute is
/// 64-bit throughout; 32-bit storage exists only in checkpoints.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}

  Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_numel(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  /// Construction path for untrusted input: rejects NaN/Inf.
  static Tensor checked(std::vector<std::int64_t> shape, std::vector<double> data) {
    Tensor t(std::move(shape), std::move(data));
    for (std::size_t i = 0; i < t.data_.size(); ++i) {
      if (!std::isfinite(t.data_[i])) {
        throw Error("non-finite value at flat index " + std::to_string(i));
      }
    }
    return t;
  }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::size_t axis) const { return shape_[axis]; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at3(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double at3(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double& at2(std::int64_t i, std::int64_t j) {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  double at2(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(std::vector<std::int64_t> shape) const {
    Tensor t;
    t.shape_ = std::move(shape);
    if (checked_numel(t.shape_) != data_.size()) {
      throw DimensionError("reshape to " + shape_string(t.shape_) + " from " +
                           shape_string(shape_) + " changes element count");
    }
    t.data_ = data_;
    return t;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  static std::string shape_string(const std::vector<std::int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
  }
  std::string shape_string() const { return shape_string(shape_); }

 private:
  static std::size_t checked_numel(const std::vector<std::int64_t>& shape) {
    std::size_t n = 1;
    for (auto e : shape) {
      if (e <= 0) throw DimensionError("tensor extent must be positive, got " + std::to_string(e));
      n *= static_cast<std::size_t>(e);
    }
    return shape.empty() ? 0 : n;
  }

  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

inline Tensor tensor1(std::vector<double> v) {
  auto n = static_cast<std::int64_t>(v.size());
  return Tensor({n}, std::move(v));
}

}  // namespace fer
