#pragma once

#include <cstddef>
#include <functional>

namespace lkreg {

/// Worker count: LKREG_THREADS when set and positive, otherwise the hardware
/// concurrency (at least 1).
int thread_count();

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = thread_count()).
/// The first exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int threads = 0);

}  // namespace lkreg
