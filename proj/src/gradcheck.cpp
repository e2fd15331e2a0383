#include "qccnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "qccnn/errors.hpp"
#include "qccnn/nn.hpp"
#include "qccnn/qconv.hpp"
#include "qccnn/rng.hpp"
#include "qccnn/tensor.hpp"

namespace qccnn::gradcheck {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

struct Tally {
  Report* report;
  double rtol, atol;

  void compare(double analytic, double fd) {
    Report& r = *report;
    ++r.cases;
    const double diff = std::abs(analytic - fd);
    const double scale = std::max(std::abs(analytic), std::abs(fd));
    r.worst_abs = std::max(r.worst_abs, diff);
    if (scale >= 1e-4) r.worst_rel = std::max(r.worst_rel, diff / scale);
    if (diff > atol + rtol * scale) r.pass = false;
  }
};

// Central difference of a scalar function along one coordinate.
double central_diff(const std::function<double(double)>& f, double x) {
  return (f(x + kFdStep) - f(x - kFdStep)) / (2.0 * kFdStep);
}

std::vector<double> random_vec(RunRng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng, lo, hi);
  return v;
}

// ------------------------------------------------------------ quantum filter

void check_filter_combo(qfilter::EncodingKind enc, qfilter::AnsatzKind ans, int trials,
                        RunRng& rng, double shift, std::vector<Report>& out) {
  const std::string base = std::string("qfilter/") +
                           (enc == qfilter::EncodingKind::Threshold   ? "threshold"
                            : enc == qfilter::EncodingKind::Angle     ? "angle"
                                                                      : "higher-order") +
                           "-" +
                           (ans == qfilter::AnsatzKind::BasicEntangling ? "basic" : "strong");
  Report params_report{base + "/params"};
  Report inputs_report{base + "/inputs"};
  Tally params_tally{&params_report, kFilterRtol, kFilterAtol};
  Tally inputs_tally{&inputs_report, kFilterRtol, kFilterAtol};
  const bool threshold = enc == qfilter::EncodingKind::Threshold;

  const int sizes[] = {2, 3, 4, 8};
  for (int t = 0; t < trials; ++t) {
    qfilter::FilterSpec spec;
    spec.n_qubits = sizes[t % 3];
    if (enc == qfilter::EncodingKind::Angle && t % 10 == 9) spec.n_qubits = sizes[3];
    spec.encoding.kind = enc;
    spec.encoding.threshold = threshold ? uniform(rng, -0.5, 0.5) : 0.0;
    spec.ansatz.kind = ans;
    spec.ansatz.n_layers = 1 + t % 2;

    const int n_params = qfilter::parameter_count(spec);
    auto params = random_vec(rng, static_cast<std::size_t>(n_params), 0.0, kTwoPi);
    auto inputs = random_vec(rng, static_cast<std::size_t>(spec.n_qubits), -1.5, 1.5);
    auto upstream = random_vec(rng, static_cast<std::size_t>(spec.n_qubits), -1.0, 1.0);

    const auto weighted = [&](std::span<const double> p, std::span<const double> x) {
      const auto z = qfilter::evaluate(spec, p, x);
      double acc = 0.0;
      for (int q = 0; q < spec.n_qubits; ++q) acc += upstream[static_cast<std::size_t>(q)] * z[static_cast<std::size_t>(q)];
      return acc;
    };

    const auto gp = qfilter::grad_params(spec, params, inputs, upstream, shift);
    for (int k = 0; k < n_params; ++k) {
      const double fd = central_diff(
          [&](double v) {
            auto p = params;
            p[static_cast<std::size_t>(k)] = v;
            return weighted(p, inputs);
          },
          params[static_cast<std::size_t>(k)]);
      params_tally.compare(gp[static_cast<std::size_t>(k)], fd);
    }

    const auto gi = qfilter::grad_inputs(spec, params, inputs, upstream, shift);
    if (threshold) {
      // Defined to be identically zero; anything else is a failure.
      for (double v : gi) {
        ++inputs_report.cases;
        if (v != 0.0) inputs_report.pass = false;
      }
    } else {
      for (int i = 0; i < spec.n_qubits; ++i) {
        const double fd = central_diff(
            [&](double v) {
              auto x = inputs;
              x[static_cast<std::size_t>(i)] = v;
              return weighted(params, x);
            },
            inputs[static_cast<std::size_t>(i)]);
        inputs_tally.compare(gi[static_cast<std::size_t>(i)], fd);
      }
    }
  }
  out.push_back(params_report);
  out.push_back(inputs_report);
}

// ------------------------------------------------------------- quantum layer

void check_qconv(int dims, RunRng& rng, double shift, std::vector<Report>& out) {
  Report report{"qconv/" + std::to_string(dims) + "d"};
  Tally tally{&report, kLayerRtol, kLayerAtol};

  const std::pair<qfilter::EncodingKind, qfilter::AnsatzKind> combos[] = {
      {qfilter::EncodingKind::Angle, qfilter::AnsatzKind::BasicEntangling},
      {qfilter::EncodingKind::Angle, qfilter::AnsatzKind::StronglyEntangling},
      {qfilter::EncodingKind::HigherOrder, qfilter::AnsatzKind::BasicEntangling},
      {qfilter::EncodingKind::HigherOrder, qfilter::AnsatzKind::StronglyEntangling},
      {qfilter::EncodingKind::Threshold, qfilter::AnsatzKind::BasicEntangling},
      {qfilter::EncodingKind::Threshold, qfilter::AnsatzKind::StronglyEntangling},
  };
  for (const auto& [enc, ans] : combos) {
    qconv::QuantumConvSpec spec;
    spec.dims = dims;
    spec.kernel = 2;
    spec.stride = dims == 2 ? 2 : 1;
    spec.in_channels = dims == 2 ? 2 : 1;
    spec.filter.n_qubits = dims == 2 ? 4 : 8;
    spec.filter.encoding.kind = enc;
    spec.filter.ansatz = {ans, 1};

    // The 8-qubit higher-order circuit is the costly one; a 3^3 input keeps
    // the finite-difference sweep quick while still overlapping windows.
    const bool big = dims == 3 && enc == qfilter::EncodingKind::Angle;
    const std::vector<std::int64_t> shape = dims == 2
                                                ? std::vector<std::int64_t>{1, 2, 4, 4}
                                                : (big ? std::vector<std::int64_t>{1, 1, 4, 4, 4}
                                                       : std::vector<std::int64_t>{1, 1, 3, 3, 3});
    nn::Tensor input(shape);
    for (auto& v : input.values()) v = uniform(rng, -1.0, 1.0);
    if (enc == qfilter::EncodingKind::Threshold) {
      // Keep inputs clear of the step at 0 so central differences stay exact.
      for (auto& v : input.values()) {
        if (std::abs(v) < 1e-3) v = v < 0 ? -1e-3 : 1e-3;
      }
    }
    auto params = random_vec(rng, static_cast<std::size_t>(qconv::param_count(spec)), 0.0, kTwoPi);

    const auto out_shape = qconv::output_shape(spec, input.shape());
    nn::Tensor upstream(out_shape);
    for (auto& v : upstream.values()) v = uniform(rng, -1.0, 1.0);

    const auto loss = [&](std::span<const double> p, const nn::Tensor& x) {
      const nn::Tensor y = qconv::forward(spec, p, x, 1);
      double acc = 0.0;
      auto yv = y.values();
      auto uv = upstream.values();
      for (std::size_t i = 0; i < yv.size(); ++i) acc += uv[i] * yv[i];
      return acc;
    };

    const auto grads = qconv::backward(spec, params, input, upstream, 1, true, shift);
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double fd = central_diff(
          [&](double v) {
            auto p = params;
            p[k] = v;
            return loss(p, input);
          },
          params[k]);
      tally.compare(grads.params[k], fd);
    }
    for (std::int64_t i = 0; i < input.numel(); ++i) {
      const double fd = central_diff(
          [&](double v) {
            nn::Tensor x = input;
            x[i] = v;
            return loss(params, x);
          },
          input[i]);
      tally.compare(grads.input[i], fd);
    }
  }
  out.push_back(report);
}

// ----------------------------------------------------------- classical layers

void check_conv(const nn::ConvSpec& spec, const std::vector<std::int64_t>& in_shape,
                const std::string& name, RunRng& rng, std::vector<Report>& out) {
  Report report{name};
  Tally tally{&report, kLayerRtol, kLayerAtol};

  nn::Tensor input(in_shape);
  for (auto& v : input.values()) v = uniform(rng, -1.0, 1.0);
  nn::Tensor weights(nn::conv_weight_shape(spec));
  for (auto& v : weights.values()) v = uniform(rng, -1.0, 1.0);
  std::vector<double> bias(static_cast<std::size_t>(spec.out_channels));
  for (auto& v : bias) v = uniform(rng, -1.0, 1.0);

  nn::Tensor upstream(nn::conv_output_shape(spec, input.shape()));
  for (auto& v : upstream.values()) v = uniform(rng, -1.0, 1.0);

  const auto loss = [&](const nn::Tensor& w, std::span<const double> b, const nn::Tensor& x) {
    const nn::Tensor y = nn::conv_forward(spec, w, b, x, 1);
    double acc = 0.0;
    auto yv = y.values();
    auto uv = upstream.values();
    for (std::size_t i = 0; i < yv.size(); ++i) acc += uv[i] * yv[i];
    return acc;
  };

  const auto grads = nn::conv_backward(spec, weights, input, upstream, 1, true);
  for (std::int64_t k = 0; k < weights.numel(); ++k) {
    const double fd = central_diff(
        [&](double v) {
          nn::Tensor w = weights;
          w[k] = v;
          return loss(w, bias, input);
        },
        weights[k]);
    tally.compare(grads.weights[k], fd);
  }
  for (std::size_t k = 0; k < bias.size(); ++k) {
    const double fd = central_diff(
        [&](double v) {
          auto b = bias;
          b[k] = v;
          return loss(weights, b, input);
        },
        bias[k]);
    tally.compare(grads.bias[k], fd);
  }
  for (std::int64_t k = 0; k < input.numel(); ++k) {
    const double fd = central_diff(
        [&](double v) {
          nn::Tensor x = input;
          x[k] = v;
          return loss(weights, bias, x);
        },
        input[k]);
    tally.compare(grads.input[k], fd);
  }
  out.push_back(report);
}

void check_relu(RunRng& rng, std::vector<Report>& out) {
  Report report{"nn/relu"};
  Tally tally{&report, kLayerRtol, kLayerAtol};
  nn::Tensor input({2, 3, 4});
  for (auto& v : input.values()) {
    do {
      v = uniform(rng, -1.0, 1.0);
    } while (std::abs(v) < 1e-3);  // keep clear of the kink
  }
  nn::Tensor upstream({2, 3, 4});
  for (auto& v : upstream.values()) v = uniform(rng, -1.0, 1.0);

  const auto loss = [&](const nn::Tensor& x) {
    const nn::Tensor y = nn::relu_forward(x);
    double acc = 0.0;
    for (std::int64_t i = 0; i < y.numel(); ++i) acc += upstream[i] * y[i];
    return acc;
  };
  const nn::Tensor gx = nn::relu_backward(input, upstream);
  for (std::int64_t k = 0; k < input.numel(); ++k) {
    const double fd = central_diff(
        [&](double v) {
          nn::Tensor x = input;
          x[k] = v;
          return loss(x);
        },
        input[k]);
    tally.compare(gx[k], fd);
  }
  out.push_back(report);
}

void check_maxpool(int dims, RunRng& rng, std::vector<Report>& out) {
  Report report{"nn/maxpool" + std::to_string(dims) + "d"};
  Tally tally{&report, kLayerRtol, kLayerAtol};
  const std::vector<std::int64_t> shape =
      dims == 2 ? std::vector<std::int64_t>{2, 2, 4, 4} : std::vector<std::int64_t>{1, 2, 4, 4, 4};

  nn::Tensor input(shape);
  // Distinct values per tensor keep every window maximum unique.
  std::vector<double> vals(static_cast<std::size_t>(input.numel()));
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<double>(i) * 1e-2;
  std::shuffle(vals.begin(), vals.end(), rng);
  std::copy(vals.begin(), vals.end(), input.values().begin());

  const auto pooled = nn::maxpool_forward(input, dims, 2, 2);
  nn::Tensor upstream = nn::Tensor::zeros_like(pooled.output);
  for (auto& v : upstream.values()) v = uniform(rng, -1.0, 1.0);

  const auto loss = [&](const nn::Tensor& x) {
    const auto y = nn::maxpool_forward(x, dims, 2, 2);
    double acc = 0.0;
    for (std::int64_t i = 0; i < y.output.numel(); ++i) acc += upstream[i] * y.output[i];
    return acc;
  };
  const nn::Tensor gx = nn::maxpool_backward(pooled, input.shape(), upstream);
  for (std::int64_t k = 0; k < input.numel(); ++k) {
    const double fd = central_diff(
        [&](double v) {
          nn::Tensor x = input;
          x[k] = v;
          return loss(x);
        },
        input[k]);
    tally.compare(gx[k], fd);
  }
  out.push_back(report);
}

void check_batchnorm(RunRng& rng, std::vector<Report>& out) {
  Report report{"nn/batchnorm"};
  Tally tally{&report, kLayerRtol, kLayerAtol};
  nn::Tensor input({2, 3, 4, 4});
  for (auto& v : input.values()) v = uniform(rng, -2.0, 2.0);
  std::vector<double> scale(3), offset(3);
  for (auto& v : scale) v = uniform(rng, 0.5, 1.5);
  for (auto& v : offset) v = uniform(rng, -0.5, 0.5);
  nn::Tensor upstream({2, 3, 4, 4});
  for (auto& v : upstream.values()) v = uniform(rng, -1.0, 1.0);

  const auto loss = [&](const nn::Tensor& x, std::span<const double> sc,
                        std::span<const double> of) {
    nn::BatchNormRunning running;
    const nn::Tensor y = nn::batchnorm_forward(x, sc, of, running, true, nullptr);
    double acc = 0.0;
    for (std::int64_t i = 0; i < y.numel(); ++i) acc += upstream[i] * y[i];
    return acc;
  };

  nn::BatchNormRunning running;
  nn::BatchNormCache cache;
  nn::batchnorm_forward(input, scale, offset, running, true, &cache);
  const auto grads = nn::batchnorm_backward(cache, scale, upstream);

  for (std::int64_t k = 0; k < input.numel(); ++k) {
    const double fd = central_diff(
        [&](double v) {
          nn::Tensor x = input;
          x[k] = v;
          return loss(x, scale, offset);
        },
        input[k]);
    tally.compare(grads.input[k], fd);
  }
  for (std::size_t k = 0; k < scale.size(); ++k) {
    const double fd = central_diff(
        [&](double v) {
          auto sc = scale;
          sc[k] = v;
          return loss(input, sc, offset);
        },
        scale[k]);
    tally.compare(grads.scale[k], fd);
    const double fd_off = central_diff(
        [&](double v) {
          auto of = offset;
          of[k] = v;
          return loss(input, scale, of);
        },
        offset[k]);
    tally.compare(grads.offset[k], fd_off);
  }
  out.push_back(report);
}

void check_linear(RunRng& rng, std::vector<Report>& out) {
  Report report{"nn/linear"};
  Tally tally{&report, kLayerRtol, kLayerAtol};
  const std::int64_t n = 3, in = 5, out_f = 4;
  nn::Tensor input({n, in});
  for (auto& v : input.values()) v = uniform(rng, -1.0, 1.0);
  nn::Tensor weights({out_f, in});
  for (auto& v : weights.values()) v = uniform(rng, -1.0, 1.0);
  std::vector<double> bias(static_cast<std::size_t>(out_f));
  for (auto& v : bias) v = uniform(rng, -1.0, 1.0);
  nn::Tensor upstream({n, out_f});
  for (auto& v : upstream.values()) v = uniform(rng, -1.0, 1.0);

  const auto loss = [&](const nn::Tensor& w, std::span<const double> b, const nn::Tensor& x) {
    const nn::Tensor y = nn::linear_forward(w, b, x, 1);
    double acc = 0.0;
    for (std::int64_t i = 0; i < y.numel(); ++i) acc += upstream[i] * y[i];
    return acc;
  };
  const auto grads = nn::linear_backward(weights, input, upstream, 1, true);
  for (std::int64_t k = 0; k < weights.numel(); ++k) {
    const double fd = central_diff(
        [&](double v) {
          nn::Tensor w = weights;
          w[k] = v;
          return loss(w, bias, input);
        },
        weights[k]);
    tally.compare(grads.weights[k], fd);
  }
  for (std::size_t k = 0; k < bias.size(); ++k) {
    const double fd = central_diff(
        [&](double v) {
          auto b = bias;
          b[k] = v;
          return loss(weights, b, input);
        },
        bias[k]);
    tally.compare(grads.bias[k], fd);
  }
  for (std::int64_t k = 0; k < input.numel(); ++k) {
    const double fd = central_diff(
        [&](double v) {
          nn::Tensor x = input;
          x[k] = v;
          return loss(weights, bias, x);
        },
        input[k]);
    tally.compare(grads.input[k], fd);
  }
  out.push_back(report);
}

void check_softmax(RunRng& rng, std::vector<Report>& out) {
  Report report{"nn/softmax-ce"};
  Tally tally{&report, kLayerRtol, kLayerAtol};
  const std::int64_t n = 4, c = 5;
  nn::Tensor logits({n, c});
  for (auto& v : logits.values()) v = uniform(rng, -2.0, 2.0);
  std::vector<std::uint16_t> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = static_cast<std::uint16_t>(uniform_int(rng, 0, c - 1));

  const auto ce = nn::softmax_cross_entropy(logits, labels);
  for (std::int64_t k = 0; k < logits.numel(); ++k) {
    const double fd = central_diff(
        [&](double v) {
          nn::Tensor z = logits;
          z[k] = v;
          return nn::softmax_cross_entropy(z, labels).loss;
        },
        logits[k]);
    tally.compare(ce.grad_logits[k], fd);
  }
  out.push_back(report);
}

}  // namespace

std::vector<Report> run_all(std::uint64_t seed, int filter_trials, double shift) {
  RunRng rng(seed);
  std::vector<Report> reports;

  for (auto enc : {qfilter::EncodingKind::Threshold, qfilter::EncodingKind::Angle,
                   qfilter::EncodingKind::HigherOrder}) {
    for (auto ans : {qfilter::AnsatzKind::BasicEntangling, qfilter::AnsatzKind::StronglyEntangling}) {
      check_filter_combo(enc, ans, filter_trials, rng, shift, reports);
    }
  }

  check_qconv(2, rng, shift, reports);
  check_qconv(3, rng, shift, reports);

  check_conv({2, 2, 4, 2, 1, 1}, {2, 2, 5, 5}, "nn/conv2d", rng, reports);
  check_conv({3, 2, 4, 2, 1, 1}, {1, 2, 4, 4, 3}, "nn/conv3d", rng, reports);
  check_conv({3, 4, 8, 2, 1, 4}, {1, 4, 3, 3, 3}, "nn/conv3d-grouped", rng, reports);
  check_relu(rng, reports);
  check_maxpool(2, rng, reports);
  check_maxpool(3, rng, reports);
  check_batchnorm(rng, reports);
  check_linear(rng, reports);
  check_softmax(rng, reports);
  return reports;
}

bool all_pass(const std::vector<Report>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const Report& r) { return r.pass; });
}

}  // namespace qccnn::gradcheck
