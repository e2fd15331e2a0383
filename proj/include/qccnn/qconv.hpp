#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qccnn/qfilter.hpp"
#include "qccnn/tensor.hpp"

namespace qccnn::qconv {

// One quantum circuit per input channel, identical architecture, independent
// parameters. Each circuit consumes k^dims inputs, so the filter qubit count
// must equal k^dims, and every input channel fans out to n_qubits output
// channels: out_channels = in_channels * k^dims.
struct QuantumConvSpec {
  int dims = 2;  // 2 or 3
  int kernel = 2;
  int stride = 2;
  int in_channels = 1;
  qfilter::FilterSpec filter;
};

// in_channels * parameter_count(filter); the flat parameter layout is
// channel-major: params[c * per_channel + k].
std::int64_t param_count(const QuantumConvSpec& spec);
int params_per_channel(const QuantumConvSpec& spec);

std::vector<std::int64_t> output_shape(const QuantumConvSpec& spec,
                                       std::span<const std::int64_t> input_shape);

// Sliding-window patches of one feature map, row-major over output positions,
// each patch flattened row-major (depth outermost for 3D). Layout:
// data[((n * C + c) * positions + p) * patch_len + i].
struct PatchSet {
  std::vector<std::int64_t> out_spatial;
  std::int64_t positions = 0;
  int patch_len = 0;
  std::vector<double> data;
};
PatchSet extract_patches(const nn::Tensor& input, int dims, int kernel, int stride);

// Min/max of every quantum output plus the count outside [-1, 1]; used by the
// debug range check that guards the raw-expectation readout contract.
struct RangeStats {
  std::int64_t checked = 0;
  std::int64_t violations = 0;
  double min_seen = 1.0;
  double max_seen = -1.0;

  void merge(const RangeStats& other);
};

// Expectation values of filter c on each patch land in output channels
// [c * n_qubits, (c+1) * n_qubits) at the patch position. No activation.
nn::Tensor forward(const QuantumConvSpec& spec, std::span<const double> params,
                   const nn::Tensor& input, int workers, RangeStats* range = nullptr);

struct Grads {
  std::vector<double> params;  // flat, channel-major
  nn::Tensor input;            // empty when skipped
};

// Parameter gradients accumulate over batch and patches; input gradients
// scatter back through every patch (summing where windows overlap). With
// workers = 1 the accumulation order is canonical and runs are bit-identical;
// a fixed worker count > 1 reduces per-thread partials in thread order.
Grads backward(const QuantumConvSpec& spec, std::span<const double> params,
               const nn::Tensor& input, const nn::Tensor& grad_out, int workers,
               bool need_input_grad = true, double shift = qfilter::kParamShift);

}  // namespace qccnn::qconv
