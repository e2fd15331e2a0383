#include "qccnn/qfilter.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qccnn/errors.hpp"

namespace qccnn::qfilter {

namespace {

constexpr double kPi = 3.14159265358979323846;

void validate_spec(const FilterSpec& spec) {
  if (spec.n_qubits < 1 || spec.n_qubits > qsim::kMaxQubits) {
    throw ConfigError("filter qubit count must be in [1, " + std::to_string(qsim::kMaxQubits) +
                      "], got " + std::to_string(spec.n_qubits));
  }
  if (spec.ansatz.n_layers < 1) {
    throw ConfigError("ansatz layer count must be >= 1, got " +
                      std::to_string(spec.ansatz.n_layers));
  }
  if (!std::isfinite(spec.encoding.threshold)) {
    throw ConfigError("threshold must be finite");
  }
}

int rotations_per_layer(AnsatzKind kind, int n_qubits) {
  return kind == AnsatzKind::BasicEntangling ? n_qubits : 3 * n_qubits;
}

}  // namespace

int parameter_count(const FilterSpec& spec) {
  validate_spec(spec);
  return rotations_per_layer(spec.ansatz.kind, spec.n_qubits) * spec.ansatz.n_layers;
}

std::vector<qsim::Gate> encode(const Encoding& enc, std::span<const double> inputs) {
  const int n = static_cast<int>(inputs.size());
  if (n < 1) throw UsageError("encode: empty input");
  std::vector<qsim::Gate> gates;
  switch (enc.kind) {
    case EncodingKind::Threshold:
      for (int i = 0; i < n; ++i) {
        if (inputs[i] >= enc.threshold) gates.push_back(qsim::Gate::rx(i, kPi));
      }
      break;
    case EncodingKind::Angle:
      for (int i = 0; i < n; ++i) gates.push_back(qsim::Gate::rx(i, inputs[i]));
      break;
    case EncodingKind::HigherOrder:
      for (int i = 0; i < n; ++i) gates.push_back(qsim::Gate::h(i));
      for (int i = 0; i < n; ++i) gates.push_back(qsim::Gate::rz(i, inputs[i]));
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          gates.push_back(qsim::Gate::cnot(i, j));
          gates.push_back(qsim::Gate::rz(j, inputs[i] * inputs[j]));
          gates.push_back(qsim::Gate::cnot(i, j));
        }
      }
      break;
  }
  return gates;
}

std::vector<qsim::Gate> ansatz_gates(const Ansatz& ansatz, std::span<const double> params,
                                     int n_qubits) {
  if (n_qubits < 1) throw UsageError("ansatz_gates: need at least one qubit");
  if (ansatz.n_layers < 1) throw ConfigError("ansatz layer count must be >= 1");
  const std::size_t expected =
      static_cast<std::size_t>(rotations_per_layer(ansatz.kind, n_qubits)) *
      static_cast<std::size_t>(ansatz.n_layers);
  if (params.size() != expected) {
    throw UsageError("ansatz_gates: got " + std::to_string(params.size()) + " parameters, need " +
                     std::to_string(expected));
  }
  std::vector<qsim::Gate> gates;
  std::size_t p = 0;
  for (int layer = 0; layer < ansatz.n_layers; ++layer) {
    if (ansatz.kind == AnsatzKind::BasicEntangling) {
      for (int q = 0; q < n_qubits; ++q) gates.push_back(qsim::Gate::rx(q, params[p++]));
    } else {
      for (int q = 0; q < n_qubits; ++q) {
        gates.push_back(qsim::Gate::rx(q, params[p++]));
        gates.push_back(qsim::Gate::ry(q, params[p++]));
        gates.push_back(qsim::Gate::rz(q, params[p++]));
      }
    }
    if (n_qubits > 1) {
      for (int q = 0; q < n_qubits; ++q) gates.push_back(qsim::Gate::cnot(q, (q + 1) % n_qubits));
    }
  }
  return gates;
}

FilterEvaluator::FilterEvaluator(const FilterSpec& spec) : spec_(spec), state_(spec.n_qubits) {
  validate_spec(spec_);
  expectations_.resize(spec_.n_qubits);
  input_occ_.resize(spec_.n_qubits);
}

void FilterEvaluator::emit(std::span<const double> params, std::span<const double> inputs) {
  const int n = spec_.n_qubits;
  if (static_cast<int>(inputs.size()) != n) {
    throw UsageError("filter: got " + std::to_string(inputs.size()) + " inputs, need " +
                     std::to_string(n));
  }
  const int n_params = parameter_count(spec_);
  if (static_cast<int>(params.size()) != n_params) {
    throw UsageError("filter: got " + std::to_string(params.size()) + " parameters, need " +
                     std::to_string(n_params));
  }

  gates_.clear();
  param_gate_.clear();
  for (auto& occ : input_occ_) occ.clear();

  switch (spec_.encoding.kind) {
    case EncodingKind::Threshold:
      for (int i = 0; i < n; ++i) {
        if (inputs[i] >= spec_.encoding.threshold) gates_.push_back(qsim::Gate::rx(i, kPi));
      }
      break;
    case EncodingKind::Angle:
      for (int i = 0; i < n; ++i) {
        input_occ_[i].push_back({static_cast<int>(gates_.size()), 1.0});
        gates_.push_back(qsim::Gate::rx(i, inputs[i]));
      }
      break;
    case EncodingKind::HigherOrder:
      for (int i = 0; i < n; ++i) gates_.push_back(qsim::Gate::h(i));
      for (int i = 0; i < n; ++i) {
        input_occ_[i].push_back({static_cast<int>(gates_.size()), 1.0});
        gates_.push_back(qsim::Gate::rz(i, inputs[i]));
      }
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          gates_.push_back(qsim::Gate::cnot(i, j));
          const int g = static_cast<int>(gates_.size());
          input_occ_[i].push_back({g, inputs[j]});
          input_occ_[j].push_back({g, inputs[i]});
          gates_.push_back(qsim::Gate::rz(j, inputs[i] * inputs[j]));
          gates_.push_back(qsim::Gate::cnot(i, j));
        }
      }
      break;
  }

  std::size_t p = 0;
  for (int layer = 0; layer < spec_.ansatz.n_layers; ++layer) {
    const bool strong = spec_.ansatz.kind == AnsatzKind::StronglyEntangling;
    for (int q = 0; q < n; ++q) {
      param_gate_.push_back(static_cast<int>(gates_.size()));
      gates_.push_back(qsim::Gate::rx(q, params[p++]));
      if (strong) {
        param_gate_.push_back(static_cast<int>(gates_.size()));
        gates_.push_back(qsim::Gate::ry(q, params[p++]));
        param_gate_.push_back(static_cast<int>(gates_.size()));
        gates_.push_back(qsim::Gate::rz(q, params[p++]));
      }
    }
    if (n > 1) {
      for (int q = 0; q < n; ++q) gates_.push_back(qsim::Gate::cnot(q, (q + 1) % n));
    }
  }
}

std::span<const double> FilterEvaluator::evaluate(std::span<const double> params,
                                                  std::span<const double> inputs) {
  emit(params, inputs);
  state_.reset();
  qsim::apply_gates(state_, gates_);
  for (int q = 0; q < spec_.n_qubits; ++q) expectations_[q] = qsim::expectation_z(state_, q);
  return expectations_;
}

double FilterEvaluator::weighted_expectation(std::span<const double> upstream) const {
  double acc = 0.0;
  for (int q = 0; q < spec_.n_qubits; ++q) acc += upstream[q] * qsim::expectation_z(state_, q);
  return acc;
}

void FilterEvaluator::gradients(std::span<const double> params, std::span<const double> inputs,
                                std::span<const double> upstream, std::span<double> grad_params_out,
                                std::span<double> grad_inputs_out, double shift) {
  const int n = spec_.n_qubits;
  if (static_cast<int>(upstream.size()) != n) {
    throw UsageError("filter gradients: upstream length must equal qubit count");
  }
  const bool want_inputs = !grad_inputs_out.empty();
  if (want_inputs && static_cast<int>(grad_inputs_out.size()) != n) {
    throw UsageError("filter gradients: input gradient span has wrong length");
  }

  emit(params, inputs);
  const int n_params = static_cast<int>(param_gate_.size());
  if (static_cast<int>(grad_params_out.size()) != n_params) {
    throw UsageError("filter gradients: parameter gradient span has wrong length");
  }

  std::fill(grad_params_out.begin(), grad_params_out.end(), 0.0);
  if (want_inputs) std::fill(grad_inputs_out.begin(), grad_inputs_out.end(), 0.0);

  const bool upstream_zero = std::all_of(upstream.begin(), upstream.end(),
                                         [](double u) { return u == 0.0; });
  if (upstream_zero) return;

  shift_gates_.clear();
  shift_gates_.assign(param_gate_.begin(), param_gate_.end());
  if (want_inputs) {
    for (const auto& occ : input_occ_) {
      for (const auto& o : occ) shift_gates_.push_back(o.gate);
    }
  }
  std::sort(shift_gates_.begin(), shift_gates_.end());
  shift_gates_.erase(std::unique(shift_gates_.begin(), shift_gates_.end()), shift_gates_.end());
  if (shift_gates_.empty()) return;

  // One forward sweep, snapshotting the state just before each shifted gate.
  // A shifted evaluation then replays only the circuit suffix.
  if (snapshots_.size() < shift_gates_.size()) snapshots_.resize(shift_gates_.size());
  state_.reset();
  std::size_t next = 0;
  for (std::size_t g = 0; g < gates_.size(); ++g) {
    if (next < shift_gates_.size() && shift_gates_[next] == static_cast<int>(g)) {
      snapshots_[next].assign(state_.amplitudes().begin(), state_.amplitudes().end());
      ++next;
    }
    qsim::apply_gate(state_, gates_[g]);
  }

  shift_value_.assign(gates_.size(), 0.0);
  for (std::size_t s = 0; s < shift_gates_.size(); ++s) {
    const int g = shift_gates_[s];
    double w[2];
    for (int side = 0; side < 2; ++side) {
      std::copy(snapshots_[s].begin(), snapshots_[s].end(), state_.amplitudes().begin());
      qsim::Gate shifted = gates_[g];
      shifted.angle += side == 0 ? shift : -shift;
      qsim::apply_gate(state_, shifted);
      for (std::size_t t = g + 1; t < gates_.size(); ++t) qsim::apply_gate(state_, gates_[t]);
      w[side] = weighted_expectation(upstream);
    }
    shift_value_[g] = (w[0] - w[1]) / 2.0;
  }

  for (int k = 0; k < n_params; ++k) grad_params_out[k] = shift_value_[param_gate_[k]];
  if (want_inputs) {
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (const auto& o : input_occ_[i]) acc += o.coeff * shift_value_[o.gate];
      grad_inputs_out[i] = acc;
    }
  }
}

std::vector<double> evaluate(const FilterSpec& spec, std::span<const double> params,
                             std::span<const double> inputs) {
  FilterEvaluator ev(spec);
  auto out = ev.evaluate(params, inputs);
  return {out.begin(), out.end()};
}

std::vector<double> grad_params(const FilterSpec& spec, std::span<const double> params,
                                std::span<const double> inputs, std::span<const double> upstream,
                                double shift) {
  FilterEvaluator ev(spec);
  std::vector<double> gp(parameter_count(spec));
  ev.gradients(params, inputs, upstream, gp, {}, shift);
  return gp;
}

std::vector<double> grad_inputs(const FilterSpec& spec, std::span<const double> params,
                                std::span<const double> inputs, std::span<const double> upstream,
                                double shift) {
  FilterEvaluator ev(spec);
  std::vector<double> gp(parameter_count(spec));
  std::vector<double> gi(spec.n_qubits);
  ev.gradients(params, inputs, upstream, gp, gi, shift);
  return gi;
}

}  // namespace qccnn::qfilter
