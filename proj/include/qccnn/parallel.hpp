#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qccnn {

// Number of hardware threads OpenMP would use, 1 without OpenMP.
inline int max_workers() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Runs body(i, thread) for i in [0, n). workers <= 1 executes the canonical
// serial order with thread = 0. Larger counts use OpenMP static scheduling,
// so a fixed worker count always partitions the range the same way and
// per-thread accumulators can be reduced in thread order deterministically.
template <class F>
void parallel_for(std::int64_t n, int workers, F&& body) {
#ifdef _OPENMP
  if (workers > 1 && n > 1) {
    if (workers > n) workers = static_cast<int>(n);
#pragma omp parallel for num_threads(workers) schedule(static)
    for (std::int64_t i = 0; i < n; ++i) body(i, omp_get_thread_num());
    return;
  }
#endif
  for (std::int64_t i = 0; i < n; ++i) body(i, 0);
}

}  // namespace qccnn
