#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dptext::par {

// All parallel loops in this library follow one rule: iteration i writes only
// to slots owned by i. Reductions over the slots happen serially afterwards in
// index order, so the parallel kernels and their serial twins agree bitwise.

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <class F>
inline void for_each_index_serial(std::size_t n, F&& f) {
  for (std::size_t i = 0; i < n; ++i) f(i);
}

template <class F>
inline void for_each_index(std::size_t n, F&& f, bool parallel = true, int thread_limit = 0) {
#ifdef _OPENMP
  if (parallel && n > 1) {
    int threads = max_threads();
    if (thread_limit > 0 && thread_limit < threads) threads = thread_limit;
#pragma omp parallel for schedule(static) num_threads(threads)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      f(static_cast<std::size_t>(i));
    }
    return;
  }
#else
  (void)parallel;
  (void)thread_limit;
#endif
  for_each_index_serial(n, f);
}

}  // namespace dptext::par
