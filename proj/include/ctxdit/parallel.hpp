#pragma once

#include <cstddef>
#include <functional>

namespace ctxdit {

/// Worker cap: CONTEXT_DIT_THREADS when set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Work items must
/// not share mutable state. The exception of the lowest failing index, if
/// any, is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ctxdit
