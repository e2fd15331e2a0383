#pragma once

#include <cstdint>
#include <random>

namespace qccnn {

// One generator per run; every random draw of a run (weight init, quantum
// angles, epoch shuffles, dropout masks) comes from it in a documented order.
using RunRng = std::mt19937_64;

inline double uniform(RunRng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(RunRng& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

inline std::int64_t uniform_int(RunRng& rng, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

}  // namespace qccnn
