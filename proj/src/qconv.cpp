#include "qccnn/qconv.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "qccnn/errors.hpp"
#include "qccnn/parallel.hpp"

namespace qccnn::qconv {

namespace {

struct Geometry {
  std::int64_t n, c;
  std::int64_t id, ih, iw;  // depth 1 for 2D
  std::int64_t od, oh, ow;
  std::int64_t positions;
  int patch_len;
};

Geometry resolve(const QuantumConvSpec& spec, std::span<const std::int64_t> input_shape) {
  if (spec.dims != 2 && spec.dims != 3) throw ConfigError("quantum conv dims must be 2 or 3");
  if (spec.kernel < 1 || spec.stride < 1) {
    throw ConfigError("quantum conv kernel and stride must be >= 1");
  }
  int patch_len = spec.kernel;
  for (int i = 1; i < spec.dims; ++i) patch_len *= spec.kernel;
  if (spec.filter.n_qubits != patch_len) {
    throw ConfigError("filter qubit count " + std::to_string(spec.filter.n_qubits) +
                      " must equal patch size " + std::to_string(patch_len));
  }
  if (static_cast<int>(input_shape.size()) != spec.dims + 2) {
    throw UsageError("quantum conv input must be rank " + std::to_string(spec.dims + 2) +
                     ", got " + nn::shape_str(input_shape));
  }
  if (input_shape[1] != spec.in_channels) {
    throw UsageError("quantum conv expects " + std::to_string(spec.in_channels) +
                     " input channels, got " + std::to_string(input_shape[1]));
  }
  Geometry g{};
  g.n = input_shape[0];
  g.c = input_shape[1];
  const bool is3d = spec.dims == 3;
  g.id = is3d ? input_shape[2] : 1;
  g.ih = input_shape[is3d ? 3 : 2];
  g.iw = input_shape[is3d ? 4 : 3];
  const std::int64_t k = spec.kernel, s = spec.stride;
  const std::int64_t kd = is3d ? k : 1, sd = is3d ? s : 1;
  if (g.id < kd || g.ih < k || g.iw < k) {
    throw UsageError("quantum conv input " + nn::shape_str(input_shape) + " smaller than kernel " +
                     std::to_string(spec.kernel));
  }
  g.od = (g.id - kd) / sd + 1;
  g.oh = (g.ih - k) / s + 1;
  g.ow = (g.iw - k) / s + 1;
  g.positions = g.od * g.oh * g.ow;
  g.patch_len = patch_len;
  return g;
}

// Copies one flattened window; row-major, depth outermost for 3D.
void gather_patch(const double* channel, const Geometry& g, int kernel, int stride, bool is3d,
                  std::int64_t od, std::int64_t oh, std::int64_t ow, double* out) {
  const std::int64_t kd = is3d ? kernel : 1;
  const std::int64_t sd = is3d ? stride : 1;
  std::int64_t w = 0;
  for (std::int64_t dd = 0; dd < kd; ++dd) {
    for (std::int64_t dh = 0; dh < kernel; ++dh) {
      for (std::int64_t dw = 0; dw < kernel; ++dw) {
        out[w++] = channel[((od * sd + dd) * g.ih + (oh * stride + dh)) * g.iw +
                           (ow * stride + dw)];
      }
    }
  }
}

void scatter_patch(double* channel, const Geometry& g, int kernel, int stride, bool is3d,
                   std::int64_t od, std::int64_t oh, std::int64_t ow, const double* grad) {
  const std::int64_t kd = is3d ? kernel : 1;
  const std::int64_t sd = is3d ? stride : 1;
  std::int64_t w = 0;
  for (std::int64_t dd = 0; dd < kd; ++dd) {
    for (std::int64_t dh = 0; dh < kernel; ++dh) {
      for (std::int64_t dw = 0; dw < kernel; ++dw) {
        channel[((od * sd + dd) * g.ih + (oh * stride + dh)) * g.iw + (ow * stride + dw)] +=
            grad[w++];
      }
    }
  }
}

}  // namespace

int params_per_channel(const QuantumConvSpec& spec) {
  return qfilter::parameter_count(spec.filter);
}

std::int64_t param_count(const QuantumConvSpec& spec) {
  return static_cast<std::int64_t>(spec.in_channels) * params_per_channel(spec);
}

std::vector<std::int64_t> output_shape(const QuantumConvSpec& spec,
                                       std::span<const std::int64_t> input_shape) {
  const Geometry g = resolve(spec, input_shape);
  const std::int64_t oc = g.c * g.patch_len;
  if (spec.dims == 3) return {g.n, oc, g.od, g.oh, g.ow};
  return {g.n, oc, g.oh, g.ow};
}

PatchSet extract_patches(const nn::Tensor& input, int dims, int kernel, int stride) {
  QuantumConvSpec probe;
  probe.dims = dims;
  probe.kernel = kernel;
  probe.stride = stride;
  probe.in_channels = static_cast<int>(input.dim(1));
  probe.filter.n_qubits = kernel;
  for (int i = 1; i < dims; ++i) probe.filter.n_qubits *= kernel;
  const Geometry g = resolve(probe, input.shape());
  const bool is3d = dims == 3;

  PatchSet set;
  set.out_spatial = is3d ? std::vector<std::int64_t>{g.od, g.oh, g.ow}
                         : std::vector<std::int64_t>{g.oh, g.ow};
  set.positions = g.positions;
  set.patch_len = g.patch_len;
  set.data.resize(static_cast<std::size_t>(g.n * g.c * g.positions * g.patch_len));

  const double* x = input.data();
  double* out = set.data.data();
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t c = 0; c < g.c; ++c) {
      const double* channel = x + (n * g.c + c) * g.id * g.ih * g.iw;
      for (std::int64_t od = 0; od < g.od; ++od) {
        for (std::int64_t oh = 0; oh < g.oh; ++oh) {
          for (std::int64_t ow = 0; ow < g.ow; ++ow) {
            gather_patch(channel, g, kernel, stride, is3d, od, oh, ow, out);
            out += g.patch_len;
          }
        }
      }
    }
  }
  return set;
}

void RangeStats::merge(const RangeStats& other) {
  checked += other.checked;
  violations += other.violations;
  min_seen = std::min(min_seen, other.min_seen);
  max_seen = std::max(max_seen, other.max_seen);
}

nn::Tensor forward(const QuantumConvSpec& spec, std::span<const double> params,
                   const nn::Tensor& input, int workers, RangeStats* range) {
  const Geometry g = resolve(spec, input.shape());
  const int per_channel = params_per_channel(spec);
  if (static_cast<std::int64_t>(params.size()) != param_count(spec)) {
    throw UsageError("quantum conv: got " + std::to_string(params.size()) + " parameters, need " +
                     std::to_string(param_count(spec)));
  }

  nn::Tensor out(output_shape(spec, input.shape()));
  const double* x = input.data();
  double* y = out.data();
  const bool is3d = spec.dims == 3;
  const std::int64_t nq = g.patch_len;
  const std::int64_t out_c_stride = g.positions;
  const std::int64_t out_n_stride = g.c * nq * out_c_stride;

  if (workers < 1) workers = 1;
  std::vector<std::unique_ptr<qfilter::FilterEvaluator>> evals(static_cast<std::size_t>(workers));
  std::vector<RangeStats> thread_range(static_cast<std::size_t>(workers));
  std::vector<std::vector<double>> patch_buf(static_cast<std::size_t>(workers),
                                             std::vector<double>(static_cast<std::size_t>(nq)));

  // Each (n, c, position) task writes a disjoint set of outputs, so the
  // result is identical for any worker count.
  parallel_for(g.n * g.c * g.positions, workers, [&](std::int64_t task, int tid) {
    auto& ev = evals[static_cast<std::size_t>(tid)];
    if (!ev) ev = std::make_unique<qfilter::FilterEvaluator>(spec.filter);
    const std::int64_t p = task % g.positions;
    const std::int64_t c = (task / g.positions) % g.c;
    const std::int64_t n = task / (g.positions * g.c);
    const std::int64_t od = p / (g.oh * g.ow);
    const std::int64_t oh = (p / g.ow) % g.oh;
    const std::int64_t ow = p % g.ow;

    double* patch = patch_buf[static_cast<std::size_t>(tid)].data();
    const double* channel = x + (n * g.c + c) * g.id * g.ih * g.iw;
    gather_patch(channel, g, spec.kernel, spec.stride, is3d, od, oh, ow, patch);

    auto z = ev->evaluate(params.subspan(static_cast<std::size_t>(c * per_channel),
                                         static_cast<std::size_t>(per_channel)),
                          std::span<const double>(patch, static_cast<std::size_t>(nq)));
    double* base = y + n * out_n_stride + c * nq * out_c_stride + p;
    for (std::int64_t q = 0; q < nq; ++q) base[q * out_c_stride] = z[static_cast<std::size_t>(q)];

    if (range) {
      auto& rs = thread_range[static_cast<std::size_t>(tid)];
      for (std::int64_t q = 0; q < nq; ++q) {
        const double v = z[static_cast<std::size_t>(q)];
        ++rs.checked;
        rs.min_seen = std::min(rs.min_seen, v);
        rs.max_seen = std::max(rs.max_seen, v);
        if (!(v >= -1.0 - 1e-9 && v <= 1.0 + 1e-9)) ++rs.violations;
      }
    }
  });

  if (range) {
    for (const auto& rs : thread_range) range->merge(rs);
  }
  return out;
}

Grads backward(const QuantumConvSpec& spec, std::span<const double> params,
               const nn::Tensor& input, const nn::Tensor& grad_out, int workers,
               bool need_input_grad, double shift) {
  const Geometry g = resolve(spec, input.shape());
  const int per_channel = params_per_channel(spec);
  if (static_cast<std::int64_t>(params.size()) != param_count(spec)) {
    throw UsageError("quantum conv: parameter count mismatch");
  }
  const auto expect_shape = output_shape(spec, input.shape());
  if (grad_out.shape() != expect_shape) {
    throw UsageError("quantum conv upstream gradient has shape " +
                     nn::shape_str(grad_out.shape()) + ", expected " +
                     nn::shape_str(expect_shape));
  }

  // Threshold encoding has an identically zero input gradient.
  if (spec.filter.encoding.kind == qfilter::EncodingKind::Threshold && need_input_grad) {
    Grads grads = backward(spec, params, input, grad_out, workers, false, shift);
    grads.input = nn::Tensor(std::vector<std::int64_t>(input.shape().begin(), input.shape().end()));
    return grads;
  }

  Grads grads;
  grads.params.assign(params.size(), 0.0);
  if (need_input_grad) {
    grads.input = nn::Tensor(std::vector<std::int64_t>(input.shape().begin(), input.shape().end()));
  }

  const double* x = input.data();
  const double* gy = grad_out.data();
  double* gx = need_input_grad ? grads.input.data() : nullptr;
  const bool is3d = spec.dims == 3;
  const std::int64_t nq = g.patch_len;
  const std::int64_t out_c_stride = g.positions;
  const std::int64_t out_n_stride = g.c * nq * out_c_stride;

  if (workers < 1) workers = 1;
  struct Workspace {
    std::unique_ptr<qfilter::FilterEvaluator> ev;
    std::vector<double> patch, upstream, gp, gi, param_acc;
  };
  std::vector<Workspace> ws(static_cast<std::size_t>(workers));

  // Tasks are (n, c) pairs: the input-gradient slice of channel c in batch
  // item n is owned exclusively by its task (one circuit per channel), and
  // per-thread parameter accumulators are reduced in thread order below.
  parallel_for(g.n * g.c, workers, [&](std::int64_t task, int tid) {
    Workspace& w = ws[static_cast<std::size_t>(tid)];
    if (!w.ev) {
      w.ev = std::make_unique<qfilter::FilterEvaluator>(spec.filter);
      w.patch.resize(static_cast<std::size_t>(nq));
      w.upstream.resize(static_cast<std::size_t>(nq));
      w.gp.resize(static_cast<std::size_t>(per_channel));
      w.gi.resize(static_cast<std::size_t>(nq));
      w.param_acc.assign(params.size(), 0.0);
    }
    const std::int64_t c = task % g.c;
    const std::int64_t n = task / g.c;
    const double* channel = x + (n * g.c + c) * g.id * g.ih * g.iw;
    double* gchannel = gx ? gx + (n * g.c + c) * g.id * g.ih * g.iw : nullptr;
    const auto ch_params = params.subspan(static_cast<std::size_t>(c * per_channel),
                                          static_cast<std::size_t>(per_channel));
    double* acc = w.param_acc.data() + c * per_channel;

    std::int64_t p = 0;
    for (std::int64_t od = 0; od < g.od; ++od) {
      for (std::int64_t oh = 0; oh < g.oh; ++oh) {
        for (std::int64_t ow = 0; ow < g.ow; ++ow, ++p) {
          const double* ub = gy + n * out_n_stride + c * nq * out_c_stride + p;
          for (std::int64_t q = 0; q < nq; ++q) {
            w.upstream[static_cast<std::size_t>(q)] = ub[q * out_c_stride];
          }
          gather_patch(channel, g, spec.kernel, spec.stride, is3d, od, oh, ow, w.patch.data());
          w.ev->gradients(ch_params, w.patch, w.upstream, w.gp,
                          gchannel ? std::span<double>(w.gi) : std::span<double>{}, shift);
          for (int k = 0; k < per_channel; ++k) acc[k] += w.gp[static_cast<std::size_t>(k)];
          if (gchannel) {
            scatter_patch(gchannel, g, spec.kernel, spec.stride, is3d, od, oh, ow, w.gi.data());
          }
        }
      }
    }
  });

  for (const Workspace& w : ws) {
    if (w.param_acc.empty()) continue;
    for (std::size_t i = 0; i < grads.params.size(); ++i) grads.params[i] += w.param_acc[i];
  }
  return grads;
}

}  // namespace qccnn::qconv
