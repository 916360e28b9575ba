#pragma once

#include <cstddef>
#include <functional>

namespace spav {

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on a small
// worker pool. Chunk boundaries depend only on n and the worker count, and
// workers write disjoint ranges, so results are identical for any pool size.
// Pool size: SPAV_THREADS env var, else hardware_concurrency (capped at 8).
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t grain = 1024);

std::size_t worker_count();
void set_worker_count(std::size_t n);  // 1 disables threading

}  // namespace spav
