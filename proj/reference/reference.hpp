#pragma once

#include <span>

#include "qccnn/nn.hpp"
#include "qccnn/tensor.hpp"

// Plain serial implementations kept for testing and benchmarking. The naive
// convolutions recompute every index from scratch and must agree with the
// production kernels exactly (the per-output summation order is the same:
// bias first, then input channels within the group ascending, then kernel
// offsets row-major).
namespace qccnn::reference {

nn::Tensor conv2d_forward_naive(const nn::ConvSpec& spec, const nn::Tensor& weights,
                                std::span<const double> bias, const nn::Tensor& input);

nn::Tensor conv3d_forward_naive(const nn::ConvSpec& spec, const nn::Tensor& weights,
                                std::span<const double> bias, const nn::Tensor& input);

nn::Tensor conv_forward_naive(const nn::ConvSpec& spec, const nn::Tensor& weights,
                              std::span<const double> bias, const nn::Tensor& input);

}  // namespace qccnn::reference
