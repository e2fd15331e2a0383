#include "qccnn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "qccnn/errors.hpp"
#include "qccnn/parallel.hpp"

namespace qccnn::nn {

namespace {

// 2D ops run through the 3D kernels with a depth of 1.
struct ConvDims {
  std::int64_t n, ic, oc, icpg, ocpg, groups;
  std::int64_t id, ih, iw;  // input spatial
  std::int64_t od, oh, ow;  // output spatial
  std::int64_t kd, kh, kw;
  std::int64_t sd, sh, sw;
};

std::int64_t out_extent(std::int64_t in, std::int64_t k, std::int64_t s) {
  return (in - k) / s + 1;
}

ConvDims resolve_conv(const ConvSpec& spec, std::span<const std::int64_t> input_shape) {
  if (spec.dims != 2 && spec.dims != 3) throw ConfigError("conv dims must be 2 or 3");
  if (spec.kernel < 1 || spec.stride < 1) throw ConfigError("conv kernel and stride must be >= 1");
  if (spec.groups < 1 || spec.in_channels % spec.groups != 0 ||
      spec.out_channels % spec.groups != 0) {
    throw ConfigError("conv groups must divide both channel counts");
  }
  if (static_cast<int>(input_shape.size()) != spec.dims + 2) {
    throw UsageError("conv input must be rank " + std::to_string(spec.dims + 2) + ", got " +
                     shape_str(input_shape));
  }
  if (input_shape[1] != spec.in_channels) {
    throw UsageError("conv expects " + std::to_string(spec.in_channels) + " input channels, got " +
                     std::to_string(input_shape[1]));
  }
  ConvDims d{};
  d.n = input_shape[0];
  d.ic = spec.in_channels;
  d.oc = spec.out_channels;
  d.groups = spec.groups;
  d.icpg = d.ic / d.groups;
  d.ocpg = d.oc / d.groups;
  const bool is3d = spec.dims == 3;
  d.id = is3d ? input_shape[2] : 1;
  d.ih = input_shape[is3d ? 3 : 2];
  d.iw = input_shape[is3d ? 4 : 3];
  d.kd = is3d ? spec.kernel : 1;
  d.kh = d.kw = spec.kernel;
  d.sd = is3d ? spec.stride : 1;
  d.sh = d.sw = spec.stride;
  if (d.id < d.kd || d.ih < d.kh || d.iw < d.kw) {
    throw UsageError("conv input " + shape_str(input_shape) + " smaller than kernel " +
                     std::to_string(spec.kernel));
  }
  d.od = out_extent(d.id, d.kd, d.sd);
  d.oh = out_extent(d.ih, d.kh, d.sh);
  d.ow = out_extent(d.iw, d.kw, d.sw);
  return d;
}

}  // namespace

std::int64_t conv_param_count(const ConvSpec& spec) {
  std::int64_t k = spec.kernel;
  for (int i = 1; i < spec.dims; ++i) k *= spec.kernel;
  return (k * spec.in_channels / spec.groups + 1) * spec.out_channels;
}

std::vector<std::int64_t> conv_weight_shape(const ConvSpec& spec) {
  std::vector<std::int64_t> s{spec.out_channels, spec.in_channels / spec.groups};
  for (int i = 0; i < spec.dims; ++i) s.push_back(spec.kernel);
  return s;
}

std::vector<std::int64_t> conv_output_shape(const ConvSpec& spec,
                                            std::span<const std::int64_t> input_shape) {
  const ConvDims d = resolve_conv(spec, input_shape);
  if (spec.dims == 3) return {d.n, d.oc, d.od, d.oh, d.ow};
  return {d.n, d.oc, d.oh, d.ow};
}

Tensor conv_forward(const ConvSpec& spec, const Tensor& weights, std::span<const double> bias,
                    const Tensor& input, int workers) {
  const ConvDims d = resolve_conv(spec, input.shape());
  if (weights.shape() != conv_weight_shape(spec)) {
    throw UsageError("conv weights have shape " + shape_str(weights.shape()) + ", expected " +
                     shape_str(conv_weight_shape(spec)));
  }
  if (static_cast<std::int64_t>(bias.size()) != d.oc) {
    throw UsageError("conv bias length must equal out_channels");
  }

  Tensor out(conv_output_shape(spec, input.shape()));
  const double* x = input.data();
  const double* w = weights.data();
  double* y = out.data();
  const std::int64_t in_c_stride = d.id * d.ih * d.iw;
  const std::int64_t in_n_stride = d.ic * in_c_stride;
  const std::int64_t w_ic_stride = d.kd * d.kh * d.kw;
  const std::int64_t w_oc_stride = d.icpg * w_ic_stride;
  const std::int64_t out_c_stride = d.od * d.oh * d.ow;
  const std::int64_t out_n_stride = d.oc * out_c_stride;

  // Each (n, oc) task owns a disjoint output slice; the inner summation order
  // (ic within group, then kernel offsets) is fixed, so results do not depend
  // on the worker count.
  parallel_for(d.n * d.oc, workers, [&](std::int64_t task, int) {
    const std::int64_t n = task / d.oc;
    const std::int64_t oc = task % d.oc;
    const std::int64_t g = oc / d.ocpg;
    const double* woc = w + oc * w_oc_stride;
    for (std::int64_t od = 0; od < d.od; ++od) {
      for (std::int64_t oh = 0; oh < d.oh; ++oh) {
        for (std::int64_t ow = 0; ow < d.ow; ++ow) {
          double acc = bias[oc];
          for (std::int64_t icg = 0; icg < d.icpg; ++icg) {
            const std::int64_t ic = g * d.icpg + icg;
            const double* xc = x + n * in_n_stride + ic * in_c_stride;
            const double* wic = woc + icg * w_ic_stride;
            for (std::int64_t kd = 0; kd < d.kd; ++kd) {
              for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                  acc += wic[(kd * d.kh + kh) * d.kw + kw] *
                         xc[((od * d.sd + kd) * d.ih + (oh * d.sh + kh)) * d.iw +
                            (ow * d.sw + kw)];
                }
              }
            }
          }
          y[n * out_n_stride + oc * out_c_stride + (od * d.oh + oh) * d.ow + ow] = acc;
        }
      }
    }
  });
  return out;
}

ConvGrads conv_backward(const ConvSpec& spec, const Tensor& weights, const Tensor& input,
                        const Tensor& grad_out, int workers, bool need_input_grad) {
  const ConvDims d = resolve_conv(spec, input.shape());
  if (grad_out.shape() != conv_output_shape(spec, input.shape())) {
    throw UsageError("conv upstream gradient has shape " + shape_str(grad_out.shape()) +
                     ", expected " + shape_str(conv_output_shape(spec, input.shape())));
  }

  ConvGrads grads;
  grads.weights = Tensor(conv_weight_shape(spec));
  grads.bias.assign(static_cast<std::size_t>(d.oc), 0.0);

  const double* x = input.data();
  const double* w = weights.data();
  const double* gy = grad_out.data();
  double* gw = grads.weights.data();
  const std::int64_t in_c_stride = d.id * d.ih * d.iw;
  const std::int64_t in_n_stride = d.ic * in_c_stride;
  const std::int64_t w_ic_stride = d.kd * d.kh * d.kw;
  const std::int64_t w_oc_stride = d.icpg * w_ic_stride;
  const std::int64_t out_c_stride = d.od * d.oh * d.ow;
  const std::int64_t out_n_stride = d.oc * out_c_stride;

  // Weight and bias gradients: each oc owns a disjoint slice.
  parallel_for(d.oc, workers, [&](std::int64_t oc, int) {
    const std::int64_t g = oc / d.ocpg;
    double* gwoc = gw + oc * w_oc_stride;
    double gb = 0.0;
    for (std::int64_t n = 0; n < d.n; ++n) {
      for (std::int64_t od = 0; od < d.od; ++od) {
        for (std::int64_t oh = 0; oh < d.oh; ++oh) {
          for (std::int64_t ow = 0; ow < d.ow; ++ow) {
            const double u =
                gy[n * out_n_stride + oc * out_c_stride + (od * d.oh + oh) * d.ow + ow];
            gb += u;
            for (std::int64_t icg = 0; icg < d.icpg; ++icg) {
              const std::int64_t ic = g * d.icpg + icg;
              const double* xc = x + n * in_n_stride + ic * in_c_stride;
              double* gwic = gwoc + icg * w_ic_stride;
              for (std::int64_t kd = 0; kd < d.kd; ++kd) {
                for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                  for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                    gwic[(kd * d.kh + kh) * d.kw + kw] +=
                        u * xc[((od * d.sd + kd) * d.ih + (oh * d.sh + kh)) * d.iw +
                               (ow * d.sw + kw)];
                  }
                }
              }
            }
          }
        }
      }
    }
    grads.bias[static_cast<std::size_t>(oc)] = gb;
  });

  if (need_input_grad) {
    grads.input = Tensor(std::vector<std::int64_t>(input.shape()));
    double* gx = grads.input.data();
    // Each n owns a disjoint input slice.
    parallel_for(d.n, workers, [&](std::int64_t n, int) {
      for (std::int64_t oc = 0; oc < d.oc; ++oc) {
        const std::int64_t g = oc / d.ocpg;
        const double* woc = w + oc * w_oc_stride;
        for (std::int64_t od = 0; od < d.od; ++od) {
          for (std::int64_t oh = 0; oh < d.oh; ++oh) {
            for (std::int64_t ow = 0; ow < d.ow; ++ow) {
              const double u =
                  gy[n * out_n_stride + oc * out_c_stride + (od * d.oh + oh) * d.ow + ow];
              for (std::int64_t icg = 0; icg < d.icpg; ++icg) {
                const std::int64_t ic = g * d.icpg + icg;
                double* gxc = gx + n * in_n_stride + ic * in_c_stride;
                const double* wic = woc + icg * w_ic_stride;
                for (std::int64_t kd = 0; kd < d.kd; ++kd) {
                  for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                    for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                      gxc[((od * d.sd + kd) * d.ih + (oh * d.sh + kh)) * d.iw +
                          (ow * d.sw + kw)] += u * wic[(kd * d.kh + kh) * d.kw + kw];
                    }
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return grads;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out = Tensor::zeros_like(input);
  auto x = input.values();
  auto y = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  if (!input.same_shape(grad_out)) throw UsageError("relu_backward: shape mismatch");
  Tensor gx = Tensor::zeros_like(input);
  auto x = input.values();
  auto g = grad_out.values();
  auto out = gx.values();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
  return gx;
}

MaxPoolResult maxpool_forward(const Tensor& input, int dims, int kernel, int stride) {
  if (dims != 2 && dims != 3) throw ConfigError("maxpool dims must be 2 or 3");
  if (static_cast<int>(input.rank()) != dims + 2) {
    throw UsageError("maxpool input must be rank " + std::to_string(dims + 2));
  }
  const bool is3d = dims == 3;
  const std::int64_t n = input.dim(0), c = input.dim(1);
  const std::int64_t id = is3d ? input.dim(2) : 1;
  const std::int64_t ih = input.dim(is3d ? 3 : 2);
  const std::int64_t iw = input.dim(is3d ? 4 : 3);
  const std::int64_t kd = is3d ? kernel : 1, kh = kernel, kw = kernel;
  const std::int64_t sd = is3d ? stride : 1, sh = stride, sw = stride;
  if (id < kd || ih < kh || iw < kw) {
    throw UsageError("maxpool input " + shape_str(input.shape()) + " smaller than window");
  }
  const std::int64_t od = out_extent(id, kd, sd);
  const std::int64_t oh = out_extent(ih, kh, sh);
  const std::int64_t ow = out_extent(iw, kw, sw);

  MaxPoolResult res;
  res.output = is3d ? Tensor({n, c, od, oh, ow}) : Tensor({n, c, oh, ow});
  res.argmax.assign(static_cast<std::size_t>(res.output.numel()), 0);

  const double* x = input.data();
  double* y = res.output.data();
  std::int64_t out_i = 0;
  for (std::int64_t ni = 0; ni < n; ++ni) {
    for (std::int64_t ci = 0; ci < c; ++ci) {
      const std::int64_t base = (ni * c + ci) * id * ih * iw;
      for (std::int64_t zd = 0; zd < od; ++zd) {
        for (std::int64_t zh = 0; zh < oh; ++zh) {
          for (std::int64_t zw = 0; zw < ow; ++zw) {
            double best = -1.0;
            std::int64_t best_idx = -1;
            for (std::int64_t dd = 0; dd < kd; ++dd) {
              for (std::int64_t dh = 0; dh < kh; ++dh) {
                for (std::int64_t dw = 0; dw < kw; ++dw) {
                  const std::int64_t idx =
                      base + ((zd * sd + dd) * ih + (zh * sh + dh)) * iw + (zw * sw + dw);
                  if (best_idx < 0 || x[idx] > best) {
                    best = x[idx];
                    best_idx = idx;
                  }
                }
              }
            }
            y[out_i] = best;
            res.argmax[static_cast<std::size_t>(out_i)] = best_idx;
            ++out_i;
          }
        }
      }
    }
  }
  return res;
}

Tensor maxpool_backward(const MaxPoolResult& cache, std::span<const std::int64_t> input_shape,
                        const Tensor& grad_out) {
  if (!grad_out.same_shape(cache.output)) throw UsageError("maxpool_backward: shape mismatch");
  Tensor gx(std::vector<std::int64_t>(input_shape.begin(), input_shape.end()));
  auto g = grad_out.values();
  for (std::size_t i = 0; i < g.size(); ++i) gx[cache.argmax[i]] += g[i];
  return gx;
}

Tensor batchnorm_forward(const Tensor& input, std::span<const double> scale,
                         std::span<const double> offset, BatchNormRunning& running, bool training,
                         BatchNormCache* cache) {
  if (input.rank() < 2) throw UsageError("batchnorm input must have a channel axis");
  const std::int64_t c = input.dim(1);
  if (static_cast<std::int64_t>(scale.size()) != c ||
      static_cast<std::int64_t>(offset.size()) != c) {
    throw UsageError("batchnorm scale/offset length must equal channel count");
  }
  const std::int64_t n = input.dim(0);
  std::int64_t spatial = 1;
  for (std::size_t i = 2; i < input.rank(); ++i) spatial *= input.dim(i);
  const std::int64_t m = n * spatial;
  if (training && m < 2) throw UsageError("batchnorm training mode needs more than one value per channel");

  if (running.mean.empty()) {
    running.mean.assign(static_cast<std::size_t>(c), 0.0);
    running.var.assign(static_cast<std::size_t>(c), 1.0);
  }

  std::vector<double> mean(static_cast<std::size_t>(c), 0.0);
  std::vector<double> var(static_cast<std::size_t>(c), 1.0);
  if (training) {
    const double* x = input.data();
    for (std::int64_t ci = 0; ci < c; ++ci) {
      double sum = 0.0;
      for (std::int64_t ni = 0; ni < n; ++ni) {
        const double* xc = x + (ni * c + ci) * spatial;
        for (std::int64_t s = 0; s < spatial; ++s) sum += xc[s];
      }
      const double mu = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::int64_t ni = 0; ni < n; ++ni) {
        const double* xc = x + (ni * c + ci) * spatial;
        for (std::int64_t s = 0; s < spatial; ++s) {
          const double dlt = xc[s] - mu;
          sq += dlt * dlt;
        }
      }
      mean[static_cast<std::size_t>(ci)] = mu;
      var[static_cast<std::size_t>(ci)] = sq / static_cast<double>(m);
    }
    for (std::int64_t ci = 0; ci < c; ++ci) {
      running.mean[ci] = (1.0 - kBatchNormMomentum) * running.mean[ci] + kBatchNormMomentum * mean[ci];
      running.var[ci] = (1.0 - kBatchNormMomentum) * running.var[ci] + kBatchNormMomentum * var[ci];
    }
    ++running.batches_seen;
  } else {
    if (running.batches_seen == 0) {
      if (!running.fallback_warned) {
        std::fprintf(stderr, "warning: batchnorm eval before any training batch, using (0, 1)\n");
        running.fallback_warned = true;
      }
      // mean 0, var 1 defaults already set
    } else {
      mean = running.mean;
      var = running.var;
    }
  }

  Tensor out = Tensor::zeros_like(input);
  Tensor x_hat = Tensor::zeros_like(input);
  std::vector<double> inv_std(static_cast<std::size_t>(c));
  for (std::int64_t ci = 0; ci < c; ++ci) {
    inv_std[static_cast<std::size_t>(ci)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(ci)] + kBatchNormEps);
  }
  const double* x = input.data();
  double* y = out.data();
  double* xh = x_hat.data();
  for (std::int64_t ni = 0; ni < n; ++ni) {
    for (std::int64_t ci = 0; ci < c; ++ci) {
      const std::int64_t base = (ni * c + ci) * spatial;
      const double mu = mean[static_cast<std::size_t>(ci)];
      const double is = inv_std[static_cast<std::size_t>(ci)];
      const double sc = scale[static_cast<std::size_t>(ci)];
      const double of = offset[static_cast<std::size_t>(ci)];
      for (std::int64_t s = 0; s < spatial; ++s) {
        const double h = (x[base + s] - mu) * is;
        xh[base + s] = h;
        y[base + s] = sc * h + of;
      }
    }
  }

  if (cache) {
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
    cache->x_hat = std::move(x_hat);
    cache->training = training;
  }
  return out;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, std::span<const double> scale,
                                  const Tensor& grad_out) {
  const Tensor& xh = cache.x_hat;
  if (!grad_out.same_shape(xh)) throw UsageError("batchnorm_backward: shape mismatch");
  const std::int64_t n = xh.dim(0), c = xh.dim(1);
  std::int64_t spatial = 1;
  for (std::size_t i = 2; i < xh.rank(); ++i) spatial *= xh.dim(i);
  const double m = static_cast<double>(n * spatial);

  BatchNormGrads grads;
  grads.input = Tensor::zeros_like(xh);
  grads.scale.assign(static_cast<std::size_t>(c), 0.0);
  grads.offset.assign(static_cast<std::size_t>(c), 0.0);

  const double* g = grad_out.data();
  const double* h = xh.data();
  double* gx = grads.input.data();

  for (std::int64_t ci = 0; ci < c; ++ci) {
    double sum_g = 0.0, sum_gh = 0.0;
    for (std::int64_t ni = 0; ni < n; ++ni) {
      const std::int64_t base = (ni * c + ci) * spatial;
      for (std::int64_t s = 0; s < spatial; ++s) {
        sum_g += g[base + s];
        sum_gh += g[base + s] * h[base + s];
      }
    }
    grads.offset[static_cast<std::size_t>(ci)] = sum_g;
    grads.scale[static_cast<std::size_t>(ci)] = sum_gh;
    const double sc = scale[static_cast<std::size_t>(ci)];
    const double is = cache.inv_std[static_cast<std::size_t>(ci)];
    if (cache.training) {
      // Batch statistics depend on the inputs.
      for (std::int64_t ni = 0; ni < n; ++ni) {
        const std::int64_t base = (ni * c + ci) * spatial;
        for (std::int64_t s = 0; s < spatial; ++s) {
          gx[base + s] =
              sc * is / m * (m * g[base + s] - sum_g - h[base + s] * sum_gh);
        }
      }
    } else {
      for (std::int64_t ni = 0; ni < n; ++ni) {
        const std::int64_t base = (ni * c + ci) * spatial;
        for (std::int64_t s = 0; s < spatial; ++s) gx[base + s] = sc * is * g[base + s];
      }
    }
  }
  return grads;
}

Tensor dropout_forward(const Tensor& input, double rate, bool training, RunRng& rng,
                       DropoutCache* cache) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) {
    if (cache) {
      cache->identity = true;
      cache->keep.clear();
      cache->scale = 1.0;
    }
    return input;
  }
  Tensor out = Tensor::zeros_like(input);
  auto x = input.values();
  auto y = out.values();
  const double scale = 1.0 / (1.0 - rate);
  std::vector<std::uint8_t> keep(x.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool k = unit(rng) >= rate;
    keep[i] = k ? 1 : 0;
    y[i] = k ? x[i] * scale : 0.0;
  }
  if (cache) {
    cache->identity = false;
    cache->keep = std::move(keep);
    cache->scale = scale;
  }
  return out;
}

Tensor dropout_backward(const DropoutCache& cache, const Tensor& grad_out) {
  if (cache.identity) return grad_out;
  if (cache.keep.size() != static_cast<std::size_t>(grad_out.numel())) {
    throw UsageError("dropout_backward: cache does not match gradient shape");
  }
  Tensor gx = Tensor::zeros_like(grad_out);
  auto g = grad_out.values();
  auto out = gx.values();
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = cache.keep[i] ? g[i] * cache.scale : 0.0;
  return gx;
}

std::int64_t linear_param_count(std::int64_t in, std::int64_t out) { return (in + 1) * out; }

Tensor linear_forward(const Tensor& weights, std::span<const double> bias, const Tensor& input,
                      int workers) {
  if (weights.rank() != 2 || input.rank() != 2) throw UsageError("linear expects rank-2 tensors");
  const std::int64_t out_f = weights.dim(0), in_f = weights.dim(1);
  if (input.dim(1) != in_f) {
    throw UsageError("linear expects " + std::to_string(in_f) + " input features, got " +
                     std::to_string(input.dim(1)));
  }
  if (static_cast<std::int64_t>(bias.size()) != out_f) {
    throw UsageError("linear bias length must equal output features");
  }
  const std::int64_t n = input.dim(0);
  Tensor out({n, out_f});
  const double* x = input.data();
  const double* w = weights.data();
  double* y = out.data();
  parallel_for(n, workers, [&](std::int64_t ni, int) {
    for (std::int64_t o = 0; o < out_f; ++o) {
      double acc = bias[static_cast<std::size_t>(o)];
      const double* wo = w + o * in_f;
      const double* xn = x + ni * in_f;
      for (std::int64_t i = 0; i < in_f; ++i) acc += wo[i] * xn[i];
      y[ni * out_f + o] = acc;
    }
  });
  return out;
}

LinearGrads linear_backward(const Tensor& weights, const Tensor& input, const Tensor& grad_out,
                            int workers, bool need_input_grad) {
  const std::int64_t out_f = weights.dim(0), in_f = weights.dim(1);
  const std::int64_t n = input.dim(0);
  if (grad_out.rank() != 2 || grad_out.dim(0) != n || grad_out.dim(1) != out_f) {
    throw UsageError("linear_backward: upstream gradient shape mismatch");
  }
  LinearGrads grads;
  grads.weights = Tensor({out_f, in_f});
  grads.bias.assign(static_cast<std::size_t>(out_f), 0.0);
  const double* x = input.data();
  const double* w = weights.data();
  const double* g = grad_out.data();
  double* gw = grads.weights.data();

  parallel_for(out_f, workers, [&](std::int64_t o, int) {
    double gb = 0.0;
    double* gwo = gw + o * in_f;
    for (std::int64_t ni = 0; ni < n; ++ni) {
      const double u = g[ni * out_f + o];
      gb += u;
      const double* xn = x + ni * in_f;
      for (std::int64_t i = 0; i < in_f; ++i) gwo[i] += u * xn[i];
    }
    grads.bias[static_cast<std::size_t>(o)] = gb;
  });

  if (need_input_grad) {
    grads.input = Tensor({n, in_f});
    double* gx = grads.input.data();
    parallel_for(n, workers, [&](std::int64_t ni, int) {
      double* gxn = gx + ni * in_f;
      for (std::int64_t o = 0; o < out_f; ++o) {
        const double u = g[ni * out_f + o];
        const double* wo = w + o * in_f;
        for (std::int64_t i = 0; i < in_f; ++i) gxn[i] += u * wo[i];
      }
    });
  }
  return grads;
}

CrossEntropyResult softmax_cross_entropy(const Tensor& logits,
                                         std::span<const std::uint16_t> labels) {
  if (logits.rank() != 2) throw UsageError("softmax_cross_entropy expects (N, classes) logits");
  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw UsageError("softmax_cross_entropy: label count must equal batch size");
  }
  CrossEntropyResult res;
  res.grad_logits = Tensor({n, c});
  const double* z = logits.data();
  double* g = res.grad_logits.data();
  double loss_sum = 0.0;
  for (std::int64_t ni = 0; ni < n; ++ni) {
    const std::uint16_t label = labels[static_cast<std::size_t>(ni)];
    if (label >= c) throw UsageError("softmax_cross_entropy: label out of range");
    const double* zn = z + ni * c;
    double zmax = zn[0];
    std::int64_t arg = 0;
    for (std::int64_t ci = 1; ci < c; ++ci) {
      if (zn[ci] > zmax) {
        zmax = zn[ci];
        arg = ci;
      }
    }
    double denom = 0.0;
    for (std::int64_t ci = 0; ci < c; ++ci) denom += std::exp(zn[ci] - zmax);
    loss_sum += std::log(denom) - (zn[label] - zmax);
    if (arg == label) ++res.correct;
    for (std::int64_t ci = 0; ci < c; ++ci) {
      const double p = std::exp(zn[ci] - zmax) / denom;
      g[ni * c + ci] = (p - (ci == label ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  res.loss = loss_sum / static_cast<double>(n);
  return res;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::int64_t step, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw UsageError("adam_step: size mismatch");
  if (step < 1) throw UsageError("adam_step: step counter starts at 1");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw UsageError("adam_step: state size mismatch");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace qccnn::nn
