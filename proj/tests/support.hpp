#pragma once

#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "qccnn/qsim.hpp"
#include "qccnn/rng.hpp"

namespace testsupport {

inline double rand_angle(qccnn::RunRng& rng) {
  return qccnn::uniform(rng, -6.0, 6.0);
}

// Random circuit drawing from every gate kind; n <= 6, <= max_gates gates.
inline qccnn::qsim::Circuit random_circuit(qccnn::RunRng& rng, int n_qubits, int max_gates) {
  qccnn::qsim::Circuit circuit(n_qubits);
  const int n_gates = static_cast<int>(qccnn::uniform_int(rng, 1, max_gates));
  for (int i = 0; i < n_gates; ++i) {
    const int kind = static_cast<int>(qccnn::uniform_int(rng, 0, n_qubits > 1 ? 5 : 3));
    const int q0 = static_cast<int>(qccnn::uniform_int(rng, 0, n_qubits - 1));
    int q1 = q0;
    if (n_qubits > 1) {
      while (q1 == q0) q1 = static_cast<int>(qccnn::uniform_int(rng, 0, n_qubits - 1));
    }
    using qccnn::qsim::Gate;
    switch (kind) {
      case 0: circuit.add(Gate::h(q0)); break;
      case 1: circuit.add(Gate::rx(q0, rand_angle(rng))); break;
      case 2: circuit.add(Gate::ry(q0, rand_angle(rng))); break;
      case 3: circuit.add(Gate::rz(q0, rand_angle(rng))); break;
      case 4: circuit.add(Gate::cnot(q0, q1)); break;
      case 5: circuit.add(Gate::rzz(q0, q1, rand_angle(rng))); break;
    }
  }
  return circuit;
}

inline double max_amp_diff(std::span<const qccnn::qsim::Amplitude> a,
                           std::span<const qccnn::qsim::Amplitude> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Fresh directory under the system temp root; removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    const auto base = std::filesystem::temp_directory_path();
    path_ = base / ("qccnn_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Runs the CLI binary (path baked in by the build) with output capture.
inline CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const auto base = std::filesystem::temp_directory_path();
  const std::string tag = std::to_string(::getpid()) + "_" + std::to_string(counter++);
  const std::string out_path = (base / ("qccnn_out_" + tag)).string();
  const std::string err_path = (base / ("qccnn_err_" + tag)).string();
  const std::string cmd =
      std::string(QCCNN_CLI_PATH) + " " + args + " > " + out_path + " 2> " + err_path;
  const int status = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = read_text(out_path);
  result.err = read_text(err_path);
  std::filesystem::remove(out_path);
  std::filesystem::remove(err_path);
  return result;
}

}  // namespace testsupport
