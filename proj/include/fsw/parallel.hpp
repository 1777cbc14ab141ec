#pragma once

#include <cstdint>
#include <functional>

namespace fsw {

// Number of worker threads the pool uses. Defaults to the hardware thread
// count (capped at 8); override with the FREQSHIELD_THREADS environment
// variable. Fixed for the lifetime of the process.
int worker_count();

// Runs fn(begin, end) over [0, n) split into contiguous chunks, one chunk per
// worker. Every index is processed by exactly one invocation, so writes to
// disjoint per-index outputs are race-free and results are independent of the
// thread count. Falls back to a single inline call when n is small.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace fsw
