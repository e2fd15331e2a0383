#include "reference.hpp"

#include "qccnn/errors.hpp"

namespace qccnn::reference {

namespace {

std::int64_t at4(const nn::Tensor& t, std::int64_t a, std::int64_t b, std::int64_t c,
                 std::int64_t d) {
  return ((a * t.dim(1) + b) * t.dim(2) + c) * t.dim(3) + d;
}

std::int64_t at5(const nn::Tensor& t, std::int64_t a, std::int64_t b, std::int64_t c,
                 std::int64_t d, std::int64_t e) {
  return (((a * t.dim(1) + b) * t.dim(2) + c) * t.dim(3) + d) * t.dim(4) + e;
}

}  // namespace

nn::Tensor conv2d_forward_naive(const nn::ConvSpec& spec, const nn::Tensor& weights,
                                std::span<const double> bias, const nn::Tensor& input) {
  if (spec.dims != 2) throw UsageError("conv2d_forward_naive needs a 2D spec");
  const std::int64_t n = input.dim(0);
  const std::int64_t ih = input.dim(2), iw = input.dim(3);
  const std::int64_t k = spec.kernel, s = spec.stride;
  const std::int64_t oh = (ih - k) / s + 1, ow = (iw - k) / s + 1;
  const std::int64_t icpg = spec.in_channels / spec.groups;
  const std::int64_t ocpg = spec.out_channels / spec.groups;

  nn::Tensor out({n, spec.out_channels, oh, ow});
  for (std::int64_t ni = 0; ni < n; ++ni) {
    for (std::int64_t oc = 0; oc < spec.out_channels; ++oc) {
      const std::int64_t g = oc / ocpg;
      for (std::int64_t y = 0; y < oh; ++y) {
        for (std::int64_t x = 0; x < ow; ++x) {
          double acc = bias[static_cast<std::size_t>(oc)];
          for (std::int64_t icg = 0; icg < icpg; ++icg) {
            const std::int64_t ic = g * icpg + icg;
            for (std::int64_t kh = 0; kh < k; ++kh) {
              for (std::int64_t kw = 0; kw < k; ++kw) {
                acc += weights[at4(weights, oc, icg, kh, kw)] *
                       input[at4(input, ni, ic, y * s + kh, x * s + kw)];
              }
            }
          }
          out[at4(out, ni, oc, y, x)] = acc;
        }
      }
    }
  }
  return out;
}

nn::Tensor conv3d_forward_naive(const nn::ConvSpec& spec, const nn::Tensor& weights,
                                std::span<const double> bias, const nn::Tensor& input) {
  if (spec.dims != 3) throw UsageError("conv3d_forward_naive needs a 3D spec");
  const std::int64_t n = input.dim(0);
  const std::int64_t id = input.dim(2), ih = input.dim(3), iw = input.dim(4);
  const std::int64_t k = spec.kernel, s = spec.stride;
  const std::int64_t od = (id - k) / s + 1, oh = (ih - k) / s + 1, ow = (iw - k) / s + 1;
  const std::int64_t icpg = spec.in_channels / spec.groups;
  const std::int64_t ocpg = spec.out_channels / spec.groups;

  nn::Tensor out({n, spec.out_channels, od, oh, ow});
  for (std::int64_t ni = 0; ni < n; ++ni) {
    for (std::int64_t oc = 0; oc < spec.out_channels; ++oc) {
      const std::int64_t g = oc / ocpg;
      for (std::int64_t z = 0; z < od; ++z) {
        for (std::int64_t y = 0; y < oh; ++y) {
          for (std::int64_t x = 0; x < ow; ++x) {
            double acc = bias[static_cast<std::size_t>(oc)];
            for (std::int64_t icg = 0; icg < icpg; ++icg) {
              const std::int64_t ic = g * icpg + icg;
              for (std::int64_t kd = 0; kd < k; ++kd) {
                for (std::int64_t kh = 0; kh < k; ++kh) {
                  for (std::int64_t kw = 0; kw < k; ++kw) {
                    acc += weights[at5(weights, oc, icg, kd, kh, kw)] *
                           input[at5(input, ni, ic, z * s + kd, y * s + kh, x * s + kw)];
                  }
                }
              }
            }
            out[at5(out, ni, oc, z, y, x)] = acc;
          }
        }
      }
    }
  }
  return out;
}

nn::Tensor conv_forward_naive(const nn::ConvSpec& spec, const nn::Tensor& weights,
                              std::span<const double> bias, const nn::Tensor& input) {
  return spec.dims == 2 ? conv2d_forward_naive(spec, weights, bias, input)
                        : conv3d_forward_naive(spec, weights, bias, input);
}

}  // namespace qccnn::reference
