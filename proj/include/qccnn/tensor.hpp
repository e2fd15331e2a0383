#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qccnn::nn {

// Dense row-major double tensor. Feature maps use (N, C, H, W) or
// (N, C, D, H, W); the container itself is layout-agnostic.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);
  Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t rank() const { return shape_.size(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  void fill(double v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Same data, new shape; element count must match.
  Tensor reshaped(std::vector<std::int64_t> new_shape) const;

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

 private:
  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

std::int64_t shape_numel(std::span<const std::int64_t> shape);
std::string shape_str(std::span<const std::int64_t> shape);

}  // namespace qccnn::nn
