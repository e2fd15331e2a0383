#include "qccnn/tensor.hpp"

#include <algorithm>

#include "qccnn/errors.hpp"

namespace qccnn::nn {

std::int64_t shape_numel(std::span<const std::int64_t> shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(std::span<const std::int64_t> shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s;
}

Tensor::Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d <= 0) throw UsageError("tensor dimensions must be positive, got " + shape_str(shape_));
  }
  data_.assign(static_cast<std::size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw UsageError("tensor data length does not match shape " + shape_str(shape_));
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<std::int64_t> new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw UsageError("reshape from " + shape_str(shape_) + " to " + shape_str(new_shape) +
                     " changes element count");
  }
  return Tensor(std::move(new_shape), data_);
}

}  // namespace qccnn::nn
