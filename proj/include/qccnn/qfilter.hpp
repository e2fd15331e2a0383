#pragma once

#include <span>
#include <vector>

#include "qccnn/qsim.hpp"

namespace qccnn::qfilter {

// Two-point parameter-shift offset; exact because every rotation generator
// here has eigenvalues +-1/2.
inline constexpr double kParamShift = 1.57079632679489661923;  // pi/2

enum class EncodingKind { Threshold, Angle, HigherOrder };

struct Encoding {
  EncodingKind kind = EncodingKind::Angle;
  double threshold = 0.0;  // Threshold only

  static Encoding threshold_at(double t) { return {EncodingKind::Threshold, t}; }
  static Encoding angle() { return {EncodingKind::Angle, 0.0}; }
  static Encoding higher_order() { return {EncodingKind::HigherOrder, 0.0}; }
};

enum class AnsatzKind { BasicEntangling, StronglyEntangling };

struct Ansatz {
  AnsatzKind kind = AnsatzKind::BasicEntangling;
  int n_layers = 1;
};

// One quantum convolutional filter: n_qubits = flattened patch size.
struct FilterSpec {
  int n_qubits = 0;
  Encoding encoding;
  Ansatz ansatz;
};

// Trainable angle count: basic = n * layers, strong = 3 * n * layers.
int parameter_count(const FilterSpec& spec);

// Encoding feature map. Threshold flips qubit i with RX(pi) iff x_i >= t.
// Angle applies RX(x_i). Higher order applies H + RZ(x_i) per qubit, then for
// each pair i < j the block CNOT(i,j), RZ(x_i * x_j) on j, CNOT(i,j).
std::vector<qsim::Gate> encode(const Encoding& enc, std::span<const double> inputs);

// Variational circuit: per layer, one X rotation per qubit (basic) or X, Y, Z
// rotations per qubit (strong), followed by the entangling ring
// CNOT(i, (i+1) mod n). A single-qubit filter has no ring.
// Parameter order: layers outermost, qubits ascending, axes X, Y, Z.
std::vector<qsim::Gate> ansatz_gates(const Ansatz& ansatz, std::span<const double> params,
                                     int n_qubits);

// Runs encode ++ ansatz from |0...0> and returns (<Z_0>, ..., <Z_{n-1}>).
// No activation is applied to the outputs.
std::vector<double> evaluate(const FilterSpec& spec, std::span<const double> params,
                             std::span<const double> inputs);

// Exact gradient of sum_q upstream[q] * <Z_q> w.r.t. the ansatz angles,
// by the two-point parameter-shift rule. `shift` exists for self-test
// negative controls only.
std::vector<double> grad_params(const FilterSpec& spec, std::span<const double> params,
                                std::span<const double> inputs, std::span<const double> upstream,
                                double shift = kParamShift);

// Gradient w.r.t. the encoded inputs. Threshold encoding is a step function
// and returns zeros; angle shifts each RX(x_i); higher order chains through
// the RZ(x_i) gate and every RZ(x_i * x_j) pair block.
std::vector<double> grad_inputs(const FilterSpec& spec, std::span<const double> params,
                                std::span<const double> inputs, std::span<const double> upstream,
                                double shift = kParamShift);

// Reusable workspace for repeated evaluations of one filter spec. Keeps the
// gate buffer and per-gate state snapshots alive so patch loops do not
// allocate. Not thread safe; use one instance per worker.
class FilterEvaluator {
 public:
  explicit FilterEvaluator(const FilterSpec& spec);

  const FilterSpec& spec() const { return spec_; }

  std::span<const double> evaluate(std::span<const double> params, std::span<const double> inputs);

  // Writes the gradient of sum_q upstream[q] * <Z_q>. grad_inputs_out may be
  // empty to skip input gradients (e.g. when the filter is the first layer).
  void gradients(std::span<const double> params, std::span<const double> inputs,
                 std::span<const double> upstream, std::span<double> grad_params_out,
                 std::span<double> grad_inputs_out, double shift = kParamShift);

 private:
  struct Occurrence {
    int gate;
    double coeff;  // d(gate angle) / d(input)
  };

  void emit(std::span<const double> params, std::span<const double> inputs);
  double weighted_expectation(std::span<const double> upstream) const;

  FilterSpec spec_;
  std::vector<qsim::Gate> gates_;
  std::vector<int> param_gate_;                    // param index -> gate index
  std::vector<std::vector<Occurrence>> input_occ_; // input index -> occurrences
  std::vector<int> shift_gates_;                   // ascending, unique
  std::vector<double> shift_value_;                // per gate index
  qsim::StateVector state_;
  std::vector<std::vector<qsim::Amplitude>> snapshots_;
  std::vector<double> expectations_;
};

}  // namespace qccnn::qfilter
