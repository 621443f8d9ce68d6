#pragma once

#include <cstdint>
#include <functional>

namespace fluidfm {

/// Number of worker threads, from FLUIDFM_THREADS (the only environment
/// variable the library reads) or hardware concurrency.
int thread_count();

/// Runs fn(i) for i in [0, n) on the shared pool. fn must only write to
/// per-index slots; the call returns when all indices completed. Results are
/// deterministic regardless of thread count because reduction (if any) is the
/// caller's responsibility and happens in index order.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace fluidfm
