#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qccnn/qfilter.hpp"

namespace qccnn::gradcheck {

struct Report {
  std::string component;
  std::int64_t cases = 0;      // compared gradient entries
  double worst_rel = 0.0;      // worst relative error among well-scaled entries
  double worst_abs = 0.0;
  bool pass = true;
};

// Central finite differences, h = 1e-5.
inline constexpr double kFdStep = 1e-5;

// Quantum gradients must sit within rtol 1e-6 (atol 1e-8 near zero);
// classical layers and the full quantum conv layer within rtol 1e-5.
inline constexpr double kFilterRtol = 1e-6;
inline constexpr double kFilterAtol = 1e-8;
inline constexpr double kLayerRtol = 1e-5;
inline constexpr double kLayerAtol = 1e-7;

// Compares parameter-shift gradients of every encoding/ansatz combination
// (params and inputs; threshold input gradients are checked to be exactly
// zero), the 2D/3D quantum conv layers, and each classical layer against
// finite differences on random instances. `shift` overrides the
// parameter-shift constant and exists as a negative-control hook.
std::vector<Report> run_all(std::uint64_t seed, int filter_trials,
                            double shift = qfilter::kParamShift);

bool all_pass(const std::vector<Report>& reports);

}  // namespace qccnn::gradcheck
