#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "qccnn/errors.hpp"
#include "qccnn/qsim.hpp"
#include "support.hpp"

using namespace qccnn;
using namespace qccnn::qsim;

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kInvSqrt2 = 0.70710678118654752440;

Amplitude amp(const StateVector& s, std::size_t i) { return s.amplitudes()[i]; }
}  // namespace

TEST_CASE("zero_state") {
  const StateVector s1 = zero_state(1);
  CHECK(s1.size() == 2);
  CHECK(amp(s1, 0) == Amplitude{1.0, 0.0});
  CHECK(amp(s1, 1) == Amplitude{0.0, 0.0});

  const StateVector s2 = zero_state(2);
  CHECK(s2.size() == 4);
  for (std::size_t i = 1; i < 4; ++i) CHECK(amp(s2, i) == Amplitude{0.0, 0.0});
  CHECK(amp(s2, 0) == Amplitude{1.0, 0.0});

  const StateVector s8 = zero_state(8);
  CHECK(s8.size() == 256);
  CHECK(amp(s8, 0) == Amplitude{1.0, 0.0});

  CHECK_THROWS_AS(zero_state(0), ConfigError);
  CHECK_THROWS_AS(zero_state(13), ConfigError);
}

TEST_CASE("hadamard on |0>") {
  StateVector s = zero_state(1);
  apply_gate(s, Gate::h(0));
  CHECK(std::abs(amp(s, 0) - Amplitude{kInvSqrt2, 0.0}) < 1e-15);
  CHECK(std::abs(amp(s, 1) - Amplitude{kInvSqrt2, 0.0}) < 1e-15);
}

TEST_CASE("cnot truth table, little endian") {
  // |01> means qubit 0 = 1, i.e. basis index 1.
  StateVector s = zero_state(2);
  s.amplitudes()[0] = {0.0, 0.0};
  s.amplitudes()[1] = {1.0, 0.0};
  apply_gate(s, Gate::cnot(0, 1));
  CHECK(amp(s, 3) == Amplitude{1.0, 0.0});
  CHECK(amp(s, 1) == Amplitude{0.0, 0.0});

  // Control 0 on index 2 (= qubit 1 set): no flip.
  StateVector t = zero_state(2);
  t.amplitudes()[0] = {0.0, 0.0};
  t.amplitudes()[2] = {1.0, 0.0};
  apply_gate(t, Gate::cnot(0, 1));
  CHECK(amp(t, 2) == Amplitude{1.0, 0.0});
}

TEST_CASE("rx(pi) flips |0> with a -i phase") {
  StateVector s = zero_state(1);
  apply_gate(s, Gate::rx(0, kPi));
  CHECK(std::abs(amp(s, 0)) < 1e-15);
  CHECK(std::abs(amp(s, 1) - Amplitude{0.0, -1.0}) < 1e-15);
}

TEST_CASE("gate index validation") {
  StateVector s = zero_state(2);
  CHECK_THROWS_AS(apply_gate(s, Gate::h(2)), UsageError);
  CHECK_THROWS_AS(apply_gate(s, Gate::rx(-1, 0.3)), UsageError);
  CHECK_THROWS_AS(Gate::cnot(1, 1), UsageError);
  CHECK_THROWS_AS(Gate::rzz(0, 0, 0.5), UsageError);
  Circuit c(2);
  CHECK_THROWS_AS(c.add(Gate::h(5)), UsageError);
}

TEST_CASE("run: identity and bell state") {
  const Circuit empty(2);
  const StateVector s = run(empty);
  CHECK(amp(s, 0) == Amplitude{1.0, 0.0});

  Circuit bell(2);
  bell.add(Gate::h(0));
  bell.add(Gate::cnot(0, 1));
  const StateVector b = run(bell);
  CHECK(std::abs(amp(b, 0) - Amplitude{kInvSqrt2, 0.0}) < 1e-15);
  CHECK(std::abs(amp(b, 3) - Amplitude{kInvSqrt2, 0.0}) < 1e-15);
  CHECK(std::abs(amp(b, 1)) < 1e-15);
  CHECK(std::abs(amp(b, 2)) < 1e-15);

  StateVector wrong = zero_state(3);
  CHECK_THROWS_AS(run(bell, std::move(wrong)), UsageError);
}

TEST_CASE("run: higher-order style circuit with all-zero angles gives |++++>") {
  // H on each qubit, zero RZ/RZZ blocks, zero-angle RX layer, CNOT ring.
  Circuit c(4);
  for (int q = 0; q < 4; ++q) c.add(Gate::h(q));
  for (int q = 0; q < 4; ++q) c.add(Gate::rz(q, 0.0));
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      c.add(Gate::cnot(i, j));
      c.add(Gate::rz(j, 0.0));
      c.add(Gate::cnot(i, j));
    }
  }
  for (int q = 0; q < 4; ++q) c.add(Gate::rx(q, 0.0));
  for (int q = 0; q < 4; ++q) c.add(Gate::cnot(q, (q + 1) % 4));

  const StateVector s = run(c);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(std::abs(amp(s, i) - Amplitude{0.25, 0.0}) < 1e-14);
  }

  // Cross-check against the dense oracle.
  const auto u = dense_unitary(c);
  StateVector init = zero_state(4);
  const auto expected = mat_vec(u, init.amplitudes(), 16);
  CHECK(testsupport::max_amp_diff(s.amplitudes(), expected) < 1e-12);
}

TEST_CASE("expectation_z basics") {
  const StateVector s0 = zero_state(1);
  CHECK(expectation_z(s0, 0) == 1.0);

  StateVector plus = zero_state(1);
  apply_gate(plus, Gate::h(0));
  CHECK(std::abs(expectation_z(plus, 0)) < 1e-15);

  for (double x : {0.0, 0.3, 1.1, kPi / 2, 2.5, kPi}) {
    StateVector s = zero_state(1);
    apply_gate(s, Gate::rx(0, x));
    CHECK(expectation_z(s, 0) == doctest::Approx(std::cos(x)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(expectation_z(s0, 1), UsageError);
}

TEST_CASE("expectation_z is exactly +-1 on computational basis states") {
  RunRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = static_cast<int>(uniform_int(rng, 1, 5));
    StateVector s = zero_state(n);
    const std::size_t b = static_cast<std::size_t>(uniform_int(rng, 0, (1 << n) - 1));
    s.amplitudes()[0] = {0.0, 0.0};
    s.amplitudes()[b] = {1.0, 0.0};
    for (int q = 0; q < n; ++q) {
      const double expected = (b >> q) & 1 ? -1.0 : 1.0;
      CHECK(expectation_z(s, q) == expected);
    }
  }
}

TEST_CASE("dense_unitary: single hadamard") {
  Circuit c(1);
  c.add(Gate::h(0));
  const auto u = dense_unitary(c);
  CHECK(std::abs(u[0] - Amplitude{kInvSqrt2, 0.0}) < 1e-15);
  CHECK(std::abs(u[1] - Amplitude{kInvSqrt2, 0.0}) < 1e-15);
  CHECK(std::abs(u[2] - Amplitude{kInvSqrt2, 0.0}) < 1e-15);
  CHECK(std::abs(u[3] - Amplitude{-kInvSqrt2, 0.0}) < 1e-15);
}

TEST_CASE("dense_unitary: rzz equals its cnot-rz-cnot decomposition") {
  for (double theta : {0.7, -1.3, 2.9}) {
    Circuit direct(2);
    direct.add(Gate::rzz(0, 1, theta));
    const auto u = dense_unitary(direct);

    // Closed form: diag(e^{-i t/2}, e^{+i t/2}, e^{+i t/2}, e^{-i t/2}).
    const Amplitude same{std::cos(theta / 2), -std::sin(theta / 2)};
    const Amplitude diff = std::conj(same);
    const Amplitude want[4] = {same, diff, diff, same};
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        const Amplitude expect = i == j ? want[i] : Amplitude{0.0, 0.0};
        CHECK(std::abs(u[i * 4 + j] - expect) < 1e-14);
      }
    }

    Circuit decomposed(2);
    decomposed.add(Gate::cnot(0, 1));
    decomposed.add(Gate::rz(1, theta));
    decomposed.add(Gate::cnot(0, 1));
    const auto v = dense_unitary(decomposed);
    CHECK(testsupport::max_amp_diff(u, v) < 1e-14);
  }
}

TEST_CASE("dense_unitary rejects large registers") {
  CHECK_THROWS_AS(dense_unitary(Circuit(9)), ConfigError);
}

TEST_CASE("property: dense unitaries are unitary") {
  RunRng rng(21);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = static_cast<int>(uniform_int(rng, 1, 4));
    const Circuit c = testsupport::random_circuit(rng, n, 6);
    const auto u = dense_unitary(c);
    const std::size_t dim = std::size_t{1} << n;
    // U * U^dagger == I
    for (std::size_t r = 0; r < dim; ++r) {
      for (std::size_t k = 0; k < dim; ++k) {
        Amplitude acc{0.0, 0.0};
        for (std::size_t j = 0; j < dim; ++j) acc += u[r * dim + j] * std::conj(u[k * dim + j]);
        const Amplitude expect = r == k ? Amplitude{1.0, 0.0} : Amplitude{0.0, 0.0};
        CHECK(std::abs(acc - expect) < 1e-10);
      }
    }
  }
}

TEST_CASE("property: run matches the dense oracle and preserves norm") {
  RunRng rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = static_cast<int>(uniform_int(rng, 1, 6));
    const Circuit c = testsupport::random_circuit(rng, n, 30);
    const StateVector s = run(c);
    CHECK(std::abs(s.norm_sq() - 1.0) <= 1e-12);

    const auto u = dense_unitary(c);
    StateVector init = zero_state(n);
    const auto expected = mat_vec(u, init.amplitudes(), s.size());
    CHECK(testsupport::max_amp_diff(s.amplitudes(), expected) <= 1e-10);

    // Same property on a non-trivial initial state.
    const StateVector prepared = run(testsupport::random_circuit(rng, n, 10));
    const StateVector out = run(c, prepared);
    CHECK(std::abs(out.norm_sq() - 1.0) <= 1e-12);
    const auto expected2 = mat_vec(u, prepared.amplitudes(), out.size());
    CHECK(testsupport::max_amp_diff(out.amplitudes(), expected2) <= 1e-10);
  }
}

TEST_CASE("property: rzz gate application equals cnot-rz-cnot application") {
  RunRng rng(44);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = static_cast<int>(uniform_int(rng, 2, 5));
    const int a = static_cast<int>(uniform_int(rng, 0, n - 1));
    int b = a;
    while (b == a) b = static_cast<int>(uniform_int(rng, 0, n - 1));
    const double theta = testsupport::rand_angle(rng);

    // Random start state from a short random circuit.
    const Circuit prep = testsupport::random_circuit(rng, n, 8);
    StateVector direct = run(prep);
    StateVector composed = direct;

    apply_gate(direct, Gate::rzz(a, b, theta));
    apply_gate(composed, Gate::cnot(a, b));
    apply_gate(composed, Gate::rz(b, theta));
    apply_gate(composed, Gate::cnot(a, b));
    CHECK(testsupport::max_amp_diff(direct.amplitudes(), composed.amplitudes()) <= 1e-12);
  }
}

TEST_CASE("property: run is linear on superposed initial states") {
  RunRng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const Circuit c = testsupport::random_circuit(rng, 2, 12);
    const Amplitude alpha{uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
    const Amplitude beta{uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
    const std::size_t ia = static_cast<std::size_t>(uniform_int(rng, 0, 3));
    std::size_t ib = ia;
    while (ib == ia) ib = static_cast<std::size_t>(uniform_int(rng, 0, 3));

    StateVector mixed = zero_state(2);
    mixed.amplitudes()[0] = {0.0, 0.0};
    mixed.amplitudes()[ia] = alpha;
    mixed.amplitudes()[ib] = beta;

    StateVector basis_a = zero_state(2);
    basis_a.amplitudes()[0] = {0.0, 0.0};
    basis_a.amplitudes()[ia] = {1.0, 0.0};
    StateVector basis_b = zero_state(2);
    basis_b.amplitudes()[0] = {0.0, 0.0};
    basis_b.amplitudes()[ib] = {1.0, 0.0};

    const StateVector out_mixed = run(c, std::move(mixed));
    const StateVector out_a = run(c, std::move(basis_a));
    const StateVector out_b = run(c, std::move(basis_b));
    for (std::size_t i = 0; i < 4; ++i) {
      const Amplitude lin = alpha * out_a.amplitudes()[i] + beta * out_b.amplitudes()[i];
      CHECK(std::abs(out_mixed.amplitudes()[i] - lin) <= 1e-12);
    }
  }
}
