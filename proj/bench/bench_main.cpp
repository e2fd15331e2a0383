// Timing comparison between the serial reference kernels and the OpenMP
// production kernels, plus worker scaling of the quantum convolution.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "qccnn/nn.hpp"
#include "qccnn/parallel.hpp"
#include "qccnn/qconv.hpp"
#include "qccnn/rng.hpp"
#include "qccnn/tensor.hpp"
#include "reference.hpp"

using namespace qccnn;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <class F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const double t0 = now_seconds();
    f();
    best = std::min(best, now_seconds() - t0);
  }
  return best;
}

double max_abs_diff(const nn::Tensor& a, const nn::Tensor& b) {
  double worst = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) worst = std::max(worst, std::abs(av[i] - bv[i]));
  return worst;
}

void bench_conv(int dims) {
  RunRng rng(1);
  nn::ConvSpec spec;
  spec.dims = dims;
  spec.in_channels = 4;
  spec.out_channels = 16;
  spec.kernel = dims == 2 ? 3 : 2;
  spec.stride = 1;

  const std::vector<std::int64_t> shape = dims == 2 ? std::vector<std::int64_t>{8, 4, 64, 64}
                                                    : std::vector<std::int64_t>{4, 4, 16, 16, 16};
  nn::Tensor input(shape);
  for (auto& v : input.values()) v = uniform(rng, -1.0, 1.0);
  nn::Tensor weights(nn::conv_weight_shape(spec));
  for (auto& v : weights.values()) v = uniform(rng, -1.0, 1.0);
  std::vector<double> bias(static_cast<std::size_t>(spec.out_channels));
  for (auto& v : bias) v = uniform(rng, -1.0, 1.0);

  nn::Tensor ref, prod;
  const double t_ref = time_best_of(3, [&] {
    ref = reference::conv_forward_naive(spec, weights, bias, input);
  });
  const double t_serial = time_best_of(3, [&] {
    prod = nn::conv_forward(spec, weights, bias, input, 1);
  });
  const int threads = max_workers();
  const double t_par = time_best_of(3, [&] {
    prod = nn::conv_forward(spec, weights, bias, input, threads);
  });
  const double diff = max_abs_diff(ref, prod);
  std::printf("conv%dd forward      naive %8.3f ms | omp x1 %8.3f ms | omp x%d %8.3f ms | max|d| %.1e\n",
              dims, t_ref * 1e3, t_serial * 1e3, threads, t_par * 1e3, diff);
}

void bench_qconv(int dims) {
  RunRng rng(2);
  qconv::QuantumConvSpec spec;
  spec.dims = dims;
  spec.kernel = 2;
  spec.stride = dims == 2 ? 2 : 1;
  spec.in_channels = dims == 2 ? 1 : 4;
  spec.filter.n_qubits = dims == 2 ? 4 : 8;
  spec.filter.encoding = dims == 2 ? qfilter::Encoding::higher_order() : qfilter::Encoding::angle();
  spec.filter.ansatz = {qfilter::AnsatzKind::StronglyEntangling, 1};

  const std::vector<std::int64_t> shape = dims == 2 ? std::vector<std::int64_t>{4, 1, 28, 28}
                                                    : std::vector<std::int64_t>{2, 4, 4, 4, 4};
  nn::Tensor input(shape);
  for (auto& v : input.values()) v = uniform(rng, -1.0, 1.0);
  std::vector<double> params(static_cast<std::size_t>(qconv::param_count(spec)));
  for (auto& v : params) v = uniform(rng, 0.0, 6.28);

  nn::Tensor serial, parallel;
  const double t1 = time_best_of(3, [&] { serial = qconv::forward(spec, params, input, 1); });
  const int threads = max_workers();
  const double tn = time_best_of(3, [&] {
    parallel = qconv::forward(spec, params, input, threads);
  });
  const double diff = max_abs_diff(serial, parallel);
  std::printf("quantum conv%dd fwd  serial %8.3f ms |           omp x%d %8.3f ms | max|d| %.1e\n",
              dims, t1 * 1e3, threads, tn * 1e3, diff);
}

}  // namespace

int main() {
  std::printf("workers available: %d\n", max_workers());
  bench_conv(2);
  bench_conv(3);
  bench_qconv(2);
  bench_qconv(3);
  return 0;
}
