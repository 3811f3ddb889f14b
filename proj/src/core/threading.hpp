#pragma once

#include <cstddef>
#include <functional>

namespace cryoforge {

/**
 * Number of worker threads: CRYOFORGE_THREADS if set (>=1), otherwise
 * std::thread::hardware_concurrency().
 */
int worker_count();

/**
 * Runs fn(i) for i in [0, n) across the worker pool. Work is split into
 * contiguous static chunks; results must be written to per-index storage so
 * the outcome is independent of scheduling. Exceptions from workers are
 * rethrown on the calling thread.
 */
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace cryoforge
