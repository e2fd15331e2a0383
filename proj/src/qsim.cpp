#include "qccnn/qsim.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "qccnn/errors.hpp"

namespace qccnn::qsim {

namespace {

void check_qubit(int q, int n, const char* what) {
  if (q < 0 || q >= n) {
    throw UsageError(std::string(what) + ": qubit index " + std::to_string(q) +
                     " out of range for " + std::to_string(n) + " qubits");
  }
}

}  // namespace

Gate Gate::cnot(int control, int target) {
  if (control == target) throw UsageError("cnot: control and target must differ");
  return {GateKind::CNOT, control, target, 0.0};
}

Gate Gate::rzz(int a, int b, double angle) {
  if (a == b) throw UsageError("rzz: qubit pair must be distinct");
  return {GateKind::RZZ, a, b, angle};
}

Circuit::Circuit(int n) : n_qubits(n) {
  if (n < 1 || n > kMaxQubits) {
    throw ConfigError("circuit qubit count must be in [1, " + std::to_string(kMaxQubits) +
                      "], got " + std::to_string(n));
  }
}

void Circuit::add(const Gate& g) {
  check_qubit(g.q0, n_qubits, "circuit add");
  if (g.two_qubit()) check_qubit(g.q1, n_qubits, "circuit add");
  gates.push_back(g);
}

StateVector::StateVector(int n_qubits) : n_qubits_(n_qubits) {
  if (n_qubits < 1 || n_qubits > kMaxQubits) {
    throw ConfigError("state vector qubit count must be in [1, " + std::to_string(kMaxQubits) +
                      "], got " + std::to_string(n_qubits));
  }
  amps_.assign(std::size_t{1} << n_qubits, Amplitude{0.0, 0.0});
  amps_[0] = Amplitude{1.0, 0.0};
}

void StateVector::reset() {
  std::fill(amps_.begin(), amps_.end(), Amplitude{0.0, 0.0});
  amps_[0] = Amplitude{1.0, 0.0};
}

double StateVector::norm_sq() const {
  double s = 0.0;
  for (const auto& a : amps_) s += std::norm(a);
  return s;
}

StateVector zero_state(int n_qubits) { return StateVector(n_qubits); }

namespace {

// Visit every (i0, i1) amplitude pair split by the addressed qubit's bit.
template <class F>
inline void for_each_pair(std::span<Amplitude> amps, int q, F&& f) {
  const std::size_t step = std::size_t{1} << q;
  const std::size_t n = amps.size();
  for (std::size_t base = 0; base < n; base += 2 * step) {
    for (std::size_t i = base; i < base + step; ++i) f(amps[i], amps[i + step]);
  }
}

}  // namespace

void apply_gate(StateVector& state, const Gate& gate) {
  const int n = state.n_qubits();
  check_qubit(gate.q0, n, "apply_gate");
  if (gate.two_qubit()) {
    check_qubit(gate.q1, n, "apply_gate");
    if (gate.q0 == gate.q1) throw UsageError("apply_gate: qubit pair must be distinct");
  }
  auto amps = state.amplitudes();

  switch (gate.kind) {
    case GateKind::H: {
      constexpr double inv_sqrt2 = 0.70710678118654752440;
      for_each_pair(amps, gate.q0, [&](Amplitude& a0, Amplitude& a1) {
        const Amplitude t0 = a0, t1 = a1;
        a0 = inv_sqrt2 * (t0 + t1);
        a1 = inv_sqrt2 * (t0 - t1);
      });
      break;
    }
    case GateKind::RX: {
      const double c = std::cos(gate.angle / 2), s = std::sin(gate.angle / 2);
      // [[c, -i s], [-i s, c]]
      for_each_pair(amps, gate.q0, [&](Amplitude& a0, Amplitude& a1) {
        const Amplitude t0 = a0, t1 = a1;
        a0 = Amplitude{c * t0.real() + s * t1.imag(), c * t0.imag() - s * t1.real()};
        a1 = Amplitude{c * t1.real() + s * t0.imag(), c * t1.imag() - s * t0.real()};
      });
      break;
    }
    case GateKind::RY: {
      const double c = std::cos(gate.angle / 2), s = std::sin(gate.angle / 2);
      // [[c, -s], [s, c]]
      for_each_pair(amps, gate.q0, [&](Amplitude& a0, Amplitude& a1) {
        const Amplitude t0 = a0, t1 = a1;
        a0 = c * t0 - s * t1;
        a1 = s * t0 + c * t1;
      });
      break;
    }
    case GateKind::RZ: {
      const Amplitude p0{std::cos(gate.angle / 2), -std::sin(gate.angle / 2)};
      const Amplitude p1 = std::conj(p0);
      const std::size_t mask = std::size_t{1} << gate.q0;
      for (std::size_t i = 0; i < amps.size(); ++i) amps[i] *= (i & mask) ? p1 : p0;
      break;
    }
    case GateKind::CNOT: {
      const std::size_t cmask = std::size_t{1} << gate.q0;
      const std::size_t tmask = std::size_t{1} << gate.q1;
      for (std::size_t i = 0; i < amps.size(); ++i) {
        if ((i & cmask) && !(i & tmask)) std::swap(amps[i], amps[i | tmask]);
      }
      break;
    }
    case GateKind::RZZ: {
      // Phase exp(-i angle/2) when the two bits agree, exp(+i angle/2) otherwise.
      const Amplitude same{std::cos(gate.angle / 2), -std::sin(gate.angle / 2)};
      const Amplitude diff = std::conj(same);
      const std::size_t ma = std::size_t{1} << gate.q0;
      const std::size_t mb = std::size_t{1} << gate.q1;
      for (std::size_t i = 0; i < amps.size(); ++i) {
        const bool a = (i & ma) != 0, b = (i & mb) != 0;
        amps[i] *= (a == b) ? same : diff;
      }
      break;
    }
  }
}

void apply_gates(StateVector& state, std::span<const Gate> gates) {
  for (const Gate& g : gates) apply_gate(state, g);
}

StateVector run(const Circuit& circuit) {
  StateVector state(circuit.n_qubits);
  apply_gates(state, circuit.gates);
  return state;
}

StateVector run(const Circuit& circuit, StateVector initial) {
  if (initial.n_qubits() != circuit.n_qubits) {
    throw UsageError("run: initial state has " + std::to_string(initial.n_qubits()) +
                     " qubits, circuit expects " + std::to_string(circuit.n_qubits));
  }
  apply_gates(initial, circuit.gates);
  return initial;
}

double expectation_z(const StateVector& state, int qubit) {
  check_qubit(qubit, state.n_qubits(), "expectation_z");
  const std::size_t mask = std::size_t{1} << qubit;
  auto amps = state.amplitudes();
  double p0 = 0.0, p1 = 0.0;
  for (std::size_t i = 0; i < amps.size(); ++i) {
    const double p = std::norm(amps[i]);
    if (i & mask) p1 += p; else p0 += p;
  }
  return p0 - p1;
}

namespace {

// Entrywise embedding used only by the dense oracle path.
// Local index for a 2-qubit gate on (qa, qb): l = bit(qa) + 2 * bit(qb).
void gate_matrix(const Gate& g, int n, std::vector<Amplitude>& out) {
  const std::size_t dim = std::size_t{1} << n;
  out.assign(dim * dim, Amplitude{0.0, 0.0});

  if (!g.two_qubit()) {
    Amplitude m[2][2];
    const double c = std::cos(g.angle / 2), s = std::sin(g.angle / 2);
    switch (g.kind) {
      case GateKind::H: {
        const double v = 0.70710678118654752440;
        m[0][0] = {v, 0}; m[0][1] = {v, 0};
        m[1][0] = {v, 0}; m[1][1] = {-v, 0};
        break;
      }
      case GateKind::RX:
        m[0][0] = {c, 0}; m[0][1] = {0, -s};
        m[1][0] = {0, -s}; m[1][1] = {c, 0};
        break;
      case GateKind::RY:
        m[0][0] = {c, 0}; m[0][1] = {-s, 0};
        m[1][0] = {s, 0}; m[1][1] = {c, 0};
        break;
      case GateKind::RZ:
        m[0][0] = {c, -s}; m[0][1] = {0, 0};
        m[1][0] = {0, 0}; m[1][1] = {c, s};
        break;
      default:
        break;
    }
    const std::size_t mask = std::size_t{1} << g.q0;
    for (std::size_t r = 0; r < dim; ++r) {
      const std::size_t rb = (r & mask) ? 1 : 0;
      for (std::size_t cidx = 0; cidx < dim; ++cidx) {
        if ((r | mask) != (cidx | mask)) continue;  // other bits must agree
        const std::size_t cb = (cidx & mask) ? 1 : 0;
        out[r * dim + cidx] = m[rb][cb];
      }
    }
    return;
  }

  Amplitude m4[4][4] = {};
  if (g.kind == GateKind::CNOT) {
    // l = bit(control) + 2 * bit(target); target flips where control = 1
    m4[0][0] = {1, 0};
    m4[3][1] = {1, 0};
    m4[2][2] = {1, 0};
    m4[1][3] = {1, 0};
  } else {  // RZZ
    const Amplitude same{std::cos(g.angle / 2), -std::sin(g.angle / 2)};
    const Amplitude diff = std::conj(same);
    m4[0][0] = same;
    m4[1][1] = diff;
    m4[2][2] = diff;
    m4[3][3] = same;
  }
  const std::size_t ma = std::size_t{1} << g.q0;
  const std::size_t mb = std::size_t{1} << g.q1;
  const std::size_t rest = ~(ma | mb);
  for (std::size_t r = 0; r < dim; ++r) {
    const std::size_t lr = ((r & ma) ? 1 : 0) + (((r & mb) ? 1 : 0) << 1);
    for (std::size_t cidx = 0; cidx < dim; ++cidx) {
      if ((r & rest) != (cidx & rest)) continue;
      const std::size_t lc = ((cidx & ma) ? 1 : 0) + (((cidx & mb) ? 1 : 0) << 1);
      out[r * dim + cidx] = m4[lr][lc];
    }
  }
}

}  // namespace

std::vector<Amplitude> dense_unitary(const Circuit& circuit) {
  const int n = circuit.n_qubits;
  if (n < 1 || n > kMaxDenseQubits) {
    throw ConfigError("dense_unitary supports up to " + std::to_string(kMaxDenseQubits) +
                      " qubits, got " + std::to_string(n));
  }
  const std::size_t dim = std::size_t{1} << n;
  std::vector<Amplitude> u(dim * dim, Amplitude{0.0, 0.0});
  for (std::size_t i = 0; i < dim; ++i) u[i * dim + i] = Amplitude{1.0, 0.0};

  std::vector<Amplitude> g, next(dim * dim);
  for (const Gate& gate : circuit.gates) {
    gate_matrix(gate, n, g);
    // next = g * u
    for (std::size_t r = 0; r < dim; ++r) {
      for (std::size_t c = 0; c < dim; ++c) {
        Amplitude acc{0.0, 0.0};
        for (std::size_t k = 0; k < dim; ++k) acc += g[r * dim + k] * u[k * dim + c];
        next[r * dim + c] = acc;
      }
    }
    std::swap(u, next);
  }
  return u;
}

std::vector<Amplitude> mat_vec(std::span<const Amplitude> u, std::span<const Amplitude> x, std::size_t dim) {
  std::vector<Amplitude> y(dim, Amplitude{0.0, 0.0});
  for (std::size_t r = 0; r < dim; ++r) {
    Amplitude acc{0.0, 0.0};
    for (std::size_t c = 0; c < dim; ++c) acc += u[r * dim + c] * x[c];
    y[r] = acc;
  }
  return y;
}

}  // namespace qccnn::qsim
