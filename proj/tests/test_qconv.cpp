#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "qccnn/errors.hpp"
#include "qccnn/qconv.hpp"
#include "qccnn/rng.hpp"
#include "support.hpp"

using namespace qccnn;
using namespace qccnn::qconv;

namespace {

QuantumConvSpec spec2d(int channels, qfilter::Encoding enc, qfilter::Ansatz ans, int stride = 2) {
  QuantumConvSpec spec;
  spec.dims = 2;
  spec.kernel = 2;
  spec.stride = stride;
  spec.in_channels = channels;
  spec.filter = {4, enc, ans};
  return spec;
}

QuantumConvSpec spec3d(int channels, qfilter::Encoding enc, qfilter::Ansatz ans, int stride = 1) {
  QuantumConvSpec spec;
  spec.dims = 3;
  spec.kernel = 2;
  spec.stride = stride;
  spec.in_channels = channels;
  spec.filter = {8, enc, ans};
  return spec;
}

std::vector<double> random_params(const QuantumConvSpec& spec, RunRng& rng) {
  std::vector<double> p(static_cast<std::size_t>(param_count(spec)));
  for (auto& v : p) v = uniform(rng, 0.0, 6.28);
  return p;
}

}  // namespace

TEST_CASE("extract_patches: counts and ordering") {
  nn::Tensor img({1, 1, 28, 28});
  const auto p1 = extract_patches(img, 2, 2, 2);
  CHECK(p1.positions == 196);
  CHECK(p1.patch_len == 4);

  nn::Tensor vol({1, 1, 8, 8, 8});
  const auto p2 = extract_patches(vol, 3, 2, 1);
  CHECK(p2.positions == 343);
  CHECK(p2.patch_len == 8);

  // A kernel-sized input yields exactly one patch equal to the flat input.
  nn::Tensor tiny({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto p3 = extract_patches(tiny, 2, 2, 2);
  REQUIRE(p3.positions == 1);
  REQUIRE(p3.data.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(p3.data[static_cast<std::size_t>(i)] == i + 1);

  // Row-major patch layout on a 3x3 input, stride 1.
  nn::Tensor grid({1, 1, 3, 3}, {0, 1, 2, 3, 4, 5, 6, 7, 8});
  const auto p4 = extract_patches(grid, 2, 2, 1);
  REQUIRE(p4.positions == 4);
  const double expect0[] = {0, 1, 3, 4};   // top-left window
  const double expect3[] = {4, 5, 7, 8};   // bottom-right window
  for (int i = 0; i < 4; ++i) {
    CHECK(p4.data[static_cast<std::size_t>(i)] == expect0[i]);
    CHECK(p4.data[static_cast<std::size_t>(12 + i)] == expect3[i]);
  }

  // Depth-major flattening for 3D.
  nn::Tensor cube({1, 1, 2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
  const auto p5 = extract_patches(cube, 3, 2, 1);
  REQUIRE(p5.positions == 1);
  for (int i = 0; i < 8; ++i) CHECK(p5.data[static_cast<std::size_t>(i)] == i);

  nn::Tensor small({1, 1, 1, 1});
  CHECK_THROWS_AS(extract_patches(small, 2, 2, 2), UsageError);
}

TEST_CASE("forward shapes and channel fan-out") {
  RunRng rng(2);
  const auto s2 = spec2d(1, qfilter::Encoding::higher_order(),
                         {qfilter::AnsatzKind::BasicEntangling, 1});
  nn::Tensor img({1, 1, 28, 28});
  for (auto& v : img.values()) v = uniform(rng, -1.0, 1.0);
  const auto out2 = forward(s2, random_params(s2, rng), img, 1);
  CHECK(out2.shape() == std::vector<std::int64_t>{1, 4, 14, 14});

  const auto s3 = spec3d(8, qfilter::Encoding::angle(),
                         {qfilter::AnsatzKind::StronglyEntangling, 1});
  nn::Tensor vol({1, 8, 6, 6, 2});
  for (auto& v : vol.values()) v = uniform(rng, -1.0, 1.0);
  const auto out3 = forward(s3, random_params(s3, rng), vol, 1);
  CHECK(out3.shape() == std::vector<std::int64_t>{1, 64, 5, 5, 1});
}

TEST_CASE("forward: zero angle-encoded input leaves every qubit at +1") {
  RunRng rng(3);
  const auto spec = spec2d(2, qfilter::Encoding::angle(),
                           {qfilter::AnsatzKind::BasicEntangling, 1});
  const std::vector<double> params(static_cast<std::size_t>(param_count(spec)), 0.0);
  nn::Tensor img({2, 2, 4, 4});
  img.fill(0.0);
  const auto out = forward(spec, params, img, 1);
  for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("forward matches a direct per-patch filter evaluation") {
  RunRng rng(4);
  const auto spec = spec2d(2, qfilter::Encoding::higher_order(),
                           {qfilter::AnsatzKind::StronglyEntangling, 1});
  const auto params = random_params(spec, rng);
  nn::Tensor img({2, 2, 4, 6});
  for (auto& v : img.values()) v = uniform(rng, -1.0, 1.0);

  const auto out = forward(spec, params, img, 1);
  const auto patches = extract_patches(img, 2, 2, 2);
  const std::int64_t positions = patches.positions;
  const int per = params_per_channel(spec);

  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t c = 0; c < 2; ++c) {
      for (std::int64_t p = 0; p < positions; ++p) {
        const std::span<const double> patch(
            patches.data.data() + ((n * 2 + c) * positions + p) * 4, 4);
        const auto z = qfilter::evaluate(
            spec.filter,
            std::span<const double>(params.data() + c * per, static_cast<std::size_t>(per)),
            patch);
        for (int q = 0; q < 4; ++q) {
          const std::int64_t oc = c * 4 + q;
          CHECK(out[((n * 8 + oc) * positions) + p] == z[static_cast<std::size_t>(q)]);
        }
      }
    }
  }
}

TEST_CASE("forward is batch-permutation equivariant and worker independent") {
  RunRng rng(5);
  const auto spec = spec2d(1, qfilter::Encoding::angle(),
                           {qfilter::AnsatzKind::StronglyEntangling, 1});
  const auto params = random_params(spec, rng);
  nn::Tensor batch({3, 1, 4, 4});
  for (auto& v : batch.values()) v = uniform(rng, -1.0, 1.0);

  const auto out = forward(spec, params, batch, 1);
  const auto out4 = forward(spec, params, batch, 4);
  for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == out4[i]);

  // Reversed batch gives reversed outputs.
  nn::Tensor reversed({3, 1, 4, 4});
  const std::int64_t isz = 16;
  for (std::int64_t n = 0; n < 3; ++n) {
    std::copy(batch.data() + n * isz, batch.data() + (n + 1) * isz,
              reversed.data() + (2 - n) * isz);
  }
  const auto rout = forward(spec, params, reversed, 1);
  const std::int64_t osz = out.numel() / 3;
  for (std::int64_t n = 0; n < 3; ++n) {
    for (std::int64_t i = 0; i < osz; ++i) {
      CHECK(rout[(2 - n) * osz + i] == out[n * osz + i]);
    }
  }
}

TEST_CASE("backward: zero upstream gives zero gradients") {
  RunRng rng(6);
  const auto spec = spec2d(1, qfilter::Encoding::angle(),
                           {qfilter::AnsatzKind::BasicEntangling, 1});
  const auto params = random_params(spec, rng);
  nn::Tensor img({1, 1, 4, 4});
  for (auto& v : img.values()) v = uniform(rng, -1.0, 1.0);
  nn::Tensor upstream({1, 4, 2, 2});
  upstream.fill(0.0);
  const auto grads = backward(spec, params, img, upstream, 1);
  for (double g : grads.params) CHECK(g == 0.0);
  for (std::int64_t i = 0; i < grads.input.numel(); ++i) CHECK(grads.input[i] == 0.0);
}

TEST_CASE("backward: single-patch input reduces to one filter gradient") {
  RunRng rng(7);
  const auto spec = spec2d(1, qfilter::Encoding::higher_order(),
                           {qfilter::AnsatzKind::BasicEntangling, 1});
  const auto params = random_params(spec, rng);
  nn::Tensor img({1, 1, 2, 2});
  for (auto& v : img.values()) v = uniform(rng, -1.0, 1.0);
  nn::Tensor upstream({1, 4, 1, 1});
  for (auto& v : upstream.values()) v = uniform(rng, -1.0, 1.0);

  const auto grads = backward(spec, params, img, upstream, 1);
  const std::vector<double> patch(img.values().begin(), img.values().end());
  const std::vector<double> up(upstream.values().begin(), upstream.values().end());
  const auto gp = qfilter::grad_params(spec.filter, params, patch, up);
  const auto gi = qfilter::grad_inputs(spec.filter, params, patch, up);
  REQUIRE(grads.params.size() == gp.size());
  for (std::size_t i = 0; i < gp.size(); ++i) CHECK(grads.params[i] == gp[i]);
  for (std::size_t i = 0; i < gi.size(); ++i) {
    CHECK(grads.input[static_cast<std::int64_t>(i)] == gi[i]);
  }
}

TEST_CASE("backward matches finite differences on the whole layer") {
  RunRng rng(8);
  const double h = 1e-5;
  const struct {
    QuantumConvSpec spec;
    std::vector<std::int64_t> shape;
  } cases[] = {
      // Overlapping 3D windows exercise the scatter-add accumulation.
      {spec2d(1, qfilter::Encoding::higher_order(), {qfilter::AnsatzKind::BasicEntangling, 1}),
       {1, 1, 4, 4}},
      {spec2d(2, qfilter::Encoding::angle(), {qfilter::AnsatzKind::StronglyEntangling, 1}),
       {1, 2, 4, 4}},
      {spec3d(1, qfilter::Encoding::angle(), {qfilter::AnsatzKind::StronglyEntangling, 1}),
       {1, 1, 3, 3, 3}},
  };
  for (const auto& tc : cases) {
    const auto params = random_params(tc.spec, rng);
    nn::Tensor input(tc.shape);
    for (auto& v : input.values()) v = uniform(rng, -1.0, 1.0);
    nn::Tensor upstream(output_shape(tc.spec, input.shape()));
    for (auto& v : upstream.values()) v = uniform(rng, -1.0, 1.0);

    const auto loss = [&](std::span<const double> p, const nn::Tensor& x) {
      const auto y = forward(tc.spec, p, x, 1);
      double acc = 0.0;
      for (std::int64_t i = 0; i < y.numel(); ++i) acc += upstream[i] * y[i];
      return acc;
    };

    const auto grads = backward(tc.spec, params, input, upstream, 1);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto plus = params, minus = params;
      plus[k] += h;
      minus[k] -= h;
      const double fd = (loss(plus, input) - loss(minus, input)) / (2 * h);
      CHECK(std::abs(grads.params[k] - fd) <=
            1e-7 + 1e-5 * std::max(std::abs(fd), std::abs(grads.params[k])));
    }
    for (std::int64_t i = 0; i < input.numel(); ++i) {
      nn::Tensor plus = input, minus = input;
      plus[i] += h;
      minus[i] -= h;
      const double fd = (loss(params, plus) - loss(params, minus)) / (2 * h);
      CHECK(std::abs(grads.input[i] - fd) <=
            1e-7 + 1e-5 * std::max(std::abs(fd), std::abs(grads.input[i])));
    }
  }
}

TEST_CASE("backward: threshold encoding yields a zero input gradient") {
  RunRng rng(9);
  const auto spec = spec2d(1, qfilter::Encoding::threshold_at(0.0),
                           {qfilter::AnsatzKind::StronglyEntangling, 1});
  const auto params = random_params(spec, rng);
  nn::Tensor img({1, 1, 4, 4});
  for (auto& v : img.values()) v = uniform(rng, -1.0, 1.0);
  nn::Tensor upstream({1, 4, 2, 2});
  for (auto& v : upstream.values()) v = uniform(rng, -1.0, 1.0);
  const auto grads = backward(spec, params, img, upstream, 1);
  for (std::int64_t i = 0; i < grads.input.numel(); ++i) CHECK(grads.input[i] == 0.0);
  double mag = 0.0;
  for (double g : grads.params) mag += std::abs(g);
  CHECK(mag > 0.0);  // the ansatz still trains
}

TEST_CASE("backward: non-overlapping windows have no cross-talk") {
  RunRng rng(10);
  const auto spec = spec2d(1, qfilter::Encoding::angle(),
                           {qfilter::AnsatzKind::BasicEntangling, 1});
  const auto params = random_params(spec, rng);
  nn::Tensor img({1, 1, 4, 4});
  for (auto& v : img.values()) v = uniform(rng, -1.0, 1.0);

  // Upstream confined to one output position: the input gradient restricted
  // to that patch equals the single-filter gradient, zero elsewhere.
  nn::Tensor upstream({1, 4, 2, 2});
  upstream.fill(0.0);
  std::vector<double> up(4);
  for (int q = 0; q < 4; ++q) {
    up[static_cast<std::size_t>(q)] = uniform(rng, -1.0, 1.0);
    upstream[q * 4 + 3] = up[static_cast<std::size_t>(q)];  // position (1, 1)
  }
  const auto grads = backward(spec, params, img, upstream, 1);

  const double patch[] = {img[10], img[11], img[14], img[15]};  // rows 2-3, cols 2-3
  const auto gi = qfilter::grad_inputs(spec.filter, params, patch, up);
  const std::int64_t patch_idx[] = {10, 11, 14, 15};
  for (std::int64_t i = 0; i < 16; ++i) {
    const auto* found = std::find(std::begin(patch_idx), std::end(patch_idx), i);
    if (found == std::end(patch_idx)) {
      CHECK(grads.input[i] == 0.0);
    } else {
      CHECK(grads.input[i] == gi[static_cast<std::size_t>(found - std::begin(patch_idx))]);
    }
  }
}

TEST_CASE("backward is deterministic per worker count") {
  RunRng rng(11);
  const auto spec = spec2d(2, qfilter::Encoding::angle(),
                           {qfilter::AnsatzKind::BasicEntangling, 1});
  const auto params = random_params(spec, rng);
  nn::Tensor img({2, 2, 4, 4});
  for (auto& v : img.values()) v = uniform(rng, -1.0, 1.0);
  nn::Tensor upstream(output_shape(spec, img.shape()));
  for (auto& v : upstream.values()) v = uniform(rng, -1.0, 1.0);

  const auto a = backward(spec, params, img, upstream, 1);
  const auto b = backward(spec, params, img, upstream, 1);
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params[i] == b.params[i]);

  const auto c = backward(spec, params, img, upstream, 3);
  const auto d = backward(spec, params, img, upstream, 3);
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    CHECK(c.params[i] == d.params[i]);
    CHECK(c.params[i] == doctest::Approx(a.params[i]).epsilon(1e-12));
  }
  for (std::int64_t i = 0; i < a.input.numel(); ++i) CHECK(c.input[i] == a.input[i]);
}

TEST_CASE("range stats catch out-of-range values and record honest extrema") {
  RunRng rng(12);
  const auto spec = spec2d(1, qfilter::Encoding::higher_order(),
                           {qfilter::AnsatzKind::BasicEntangling, 1});
  const auto params = random_params(spec, rng);
  nn::Tensor img({1, 1, 4, 4});
  for (auto& v : img.values()) v = uniform(rng, -1.0, 1.0);

  RangeStats stats;
  forward(spec, params, img, 1, &stats);
  CHECK(stats.checked == 16);  // 4 outputs x 4 positions
  CHECK(stats.violations == 0);
  CHECK(stats.min_seen >= -1.0 - 1e-9);
  CHECK(stats.max_seen <= 1.0 + 1e-9);
}

TEST_CASE("spec validation") {
  QuantumConvSpec bad = spec2d(1, qfilter::Encoding::angle(),
                               {qfilter::AnsatzKind::BasicEntangling, 1});
  bad.filter.n_qubits = 5;  // != k^2
  nn::Tensor img({1, 1, 4, 4});
  std::vector<double> params(5, 0.0);
  CHECK_THROWS_AS(forward(bad, params, img, 1), ConfigError);

  const auto spec = spec2d(2, qfilter::Encoding::angle(),
                           {qfilter::AnsatzKind::BasicEntangling, 1});
  nn::Tensor wrong_channels({1, 3, 4, 4});
  std::vector<double> p(static_cast<std::size_t>(param_count(spec)), 0.0);
  CHECK_THROWS_AS(forward(spec, p, wrong_channels, 1), UsageError);
}
