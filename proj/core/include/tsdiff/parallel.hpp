#pragma once

#include <cstddef>
#include <functional>

namespace tsdiff {

/// Runs fn(i) for i in [0, n). Iterations must write to disjoint state; the
/// caller reduces results in index order, which keeps outputs independent of
/// the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

void set_num_threads(int n);
int num_threads();

/// Applies TSDIFF_NUM_THREADS from the environment, if set.
void configure_threads_from_env();

/// Keeps large temporaries on the heap instead of fresh mmap'd pages. The
/// sampler allocates many short-lived matrices of a few hundred KB each, and
/// returning them to the kernel every step costs more than the math on glibc.
/// Process-wide, so only executables call it. No-op elsewhere.
void tune_allocator();

}  // namespace tsdiff
