#include "tsdiff/parallel.hpp"

#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>

#ifdef TSDIFF_HAVE_OPENMP
#include <omp.h>
#endif
#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace tsdiff {

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
#ifdef TSDIFF_HAVE_OPENMP
  if (n > 1 && omp_get_max_threads() > 1) {
    std::exception_ptr error;
    std::mutex m;
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      try {
        fn(static_cast<std::size_t>(i));
      } catch (...) {
        std::lock_guard lock(m);
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

void set_num_threads(int n) {
#ifdef TSDIFF_HAVE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int num_threads() {
#ifdef TSDIFF_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void configure_threads_from_env() {
  if (const char* v = std::getenv("TSDIFF_NUM_THREADS")) {
    try {
      set_num_threads(std::stoi(v));
    } catch (const std::exception&) {
      // ignore malformed values
    }
  }
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace tsdiff
