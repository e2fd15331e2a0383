#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qccnn/rng.hpp"
#include "qccnn/tensor.hpp"

namespace qccnn::nn {

// ---------------------------------------------------------------- convolution

// Cross-correlation (no kernel flip), no padding. Grouped connectivity
// partitions input and output channels evenly across `groups`.
struct ConvSpec {
  int dims = 2;  // 2 or 3
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 2;
  int stride = 1;
  int groups = 1;
};

// (k^dims * in_channels / groups + 1) * out_channels
std::int64_t conv_param_count(const ConvSpec& spec);

// Weight tensor shape for a spec: (out, in/groups, k, k[, k]).
std::vector<std::int64_t> conv_weight_shape(const ConvSpec& spec);

// Output shape for an input (N, C, spatial...); throws on mismatch.
std::vector<std::int64_t> conv_output_shape(const ConvSpec& spec,
                                            std::span<const std::int64_t> input_shape);

Tensor conv_forward(const ConvSpec& spec, const Tensor& weights, std::span<const double> bias,
                    const Tensor& input, int workers);

struct ConvGrads {
  Tensor weights;
  std::vector<double> bias;
  Tensor input;  // empty when skipped
};

ConvGrads conv_backward(const ConvSpec& spec, const Tensor& weights, const Tensor& input,
                        const Tensor& grad_out, int workers, bool need_input_grad = true);

// ----------------------------------------------------------------------- relu

Tensor relu_forward(const Tensor& input);
// Subgradient at 0 is 0: gradient passes only where input > 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

// ------------------------------------------------------------------- max pool

struct MaxPoolResult {
  Tensor output;
  std::vector<std::int64_t> argmax;  // flat input index per output element
};

// Per-window maximum; ties resolve to the first element in row-major window
// order. 2D pools (k, k) windows, 3D pools (k, k, k).
MaxPoolResult maxpool_forward(const Tensor& input, int dims, int kernel, int stride);
Tensor maxpool_backward(const MaxPoolResult& cache, std::span<const std::int64_t> input_shape,
                        const Tensor& grad_out);

// ----------------------------------------------------------------- batch norm

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct BatchNormRunning {
  std::vector<double> mean, var;  // population variance
  std::int64_t batches_seen = 0;
  bool fallback_warned = false;  // eval ran before any training statistics
};

struct BatchNormCache {
  std::vector<double> mean, inv_std;
  Tensor x_hat;
  bool training = true;
};

// Per-channel standardization with learnable scale/offset. Training mode uses
// batch statistics and folds them into the running estimates; eval mode uses
// the running estimates, or (0, 1) with a warning record if none exist yet.
Tensor batchnorm_forward(const Tensor& input, std::span<const double> scale,
                         std::span<const double> offset, BatchNormRunning& running, bool training,
                         BatchNormCache* cache);

struct BatchNormGrads {
  Tensor input;
  std::vector<double> scale, offset;
};

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, std::span<const double> scale,
                                  const Tensor& grad_out);

// -------------------------------------------------------------------- dropout

struct DropoutCache {
  std::vector<std::uint8_t> keep;
  double scale = 1.0;
  bool identity = true;
};

// Inverted dropout: each element is zeroed with probability `rate` and
// survivors are scaled by 1/(1-rate). Eval mode is the identity.
Tensor dropout_forward(const Tensor& input, double rate, bool training, RunRng& rng,
                       DropoutCache* cache);
Tensor dropout_backward(const DropoutCache& cache, const Tensor& grad_out);

// --------------------------------------------------------------------- linear

std::int64_t linear_param_count(std::int64_t in, std::int64_t out);

// y = W x + b with weights (out, in), input (N, in).
Tensor linear_forward(const Tensor& weights, std::span<const double> bias, const Tensor& input,
                      int workers);

struct LinearGrads {
  Tensor weights;
  std::vector<double> bias;
  Tensor input;
};

LinearGrads linear_backward(const Tensor& weights, const Tensor& input, const Tensor& grad_out,
                            int workers, bool need_input_grad = true);

// ----------------------------------------------------------------------- loss

struct CrossEntropyResult {
  double loss = 0.0;       // mean over the batch
  Tensor grad_logits;      // d(mean loss)/d(logits)
  std::int64_t correct = 0;  // argmax == label (first index wins ties)
};

// Numerically stabilized by max subtraction. Gradient equals
// (softmax - onehot) / batch.
CrossEntropyResult softmax_cross_entropy(const Tensor& logits,
                                         std::span<const std::uint16_t> labels);

// ----------------------------------------------------------------------- adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
};

// Standard bias-corrected update; `step` starts at 1.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::int64_t step, const AdamConfig& cfg);

}  // namespace qccnn::nn
