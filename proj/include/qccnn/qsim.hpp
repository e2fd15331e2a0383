#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qccnn::qsim {

using Amplitude = std::complex<double>;

inline constexpr int kMaxQubits = 12;       // statevector register cap
inline constexpr int kMaxDenseQubits = 8;   // dense_unitary cap

enum class GateKind : std::uint8_t { H, RX, RY, RZ, CNOT, RZZ };

// One gate application. Single-qubit kinds use q0 only; CNOT is
// (q0 = control, q1 = target); RZZ acts symmetrically on the pair.
// Rotation convention: R_A(theta) = exp(-i * theta * A / 2).
struct Gate {
  GateKind kind = GateKind::H;
  int q0 = 0;
  int q1 = -1;
  double angle = 0.0;

  static Gate h(int q) { return {GateKind::H, q, -1, 0.0}; }
  static Gate rx(int q, double angle) { return {GateKind::RX, q, -1, angle}; }
  static Gate ry(int q, double angle) { return {GateKind::RY, q, -1, angle}; }
  static Gate rz(int q, double angle) { return {GateKind::RZ, q, -1, angle}; }
  static Gate cnot(int control, int target);
  static Gate rzz(int a, int b, double angle);

  bool two_qubit() const { return kind == GateKind::CNOT || kind == GateKind::RZZ; }
};

struct Circuit {
  int n_qubits = 0;
  std::vector<Gate> gates;

  Circuit() = default;
  explicit Circuit(int n);
  // Validates qubit indices against n_qubits.
  void add(const Gate& g);
};

// Dense amplitude vector over the 2^n computational basis states.
// Qubit q is bit q of the basis-state index (qubit 0 = least significant).
class StateVector {
 public:
  explicit StateVector(int n_qubits);  // |0...0>

  int n_qubits() const { return n_qubits_; }
  std::size_t size() const { return amps_.size(); }
  std::span<const Amplitude> amplitudes() const { return amps_; }
  std::span<Amplitude> amplitudes() { return amps_; }
  void reset();  // back to |0...0>
  double norm_sq() const;

 private:
  int n_qubits_;
  std::vector<Amplitude> amps_;
};

StateVector zero_state(int n_qubits);

// In-place pairwise amplitude mixing; no gate matrix is materialized.
void apply_gate(StateVector& state, const Gate& gate);
void apply_gates(StateVector& state, std::span<const Gate> gates);

StateVector run(const Circuit& circuit);
StateVector run(const Circuit& circuit, StateVector initial);

// Exact <Z> of one qubit: sum_b |amp_b|^2 * (+1 if bit(b, qubit) == 0 else -1).
double expectation_z(const StateVector& state, int qubit);

// Full circuit unitary (row-major, dimension 2^n) as the ordered product of
// embedded gate matrices. Built entrywise from the gate matrix elements,
// independent of apply_gate, so the two paths can check each other.
std::vector<Amplitude> dense_unitary(const Circuit& circuit);

// y = U * x for a row-major square matrix of dimension dim.
std::vector<Amplitude> mat_vec(std::span<const Amplitude> u, std::span<const Amplitude> x, std::size_t dim);

}  // namespace qccnn::qsim
