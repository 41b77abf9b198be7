#pragma once

#include <cstddef>
#include <functional>

namespace snrge {

/// Worker count: SNRGE_THREADS if set and positive, else hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for every i in [0, n). Iterations are split into contiguous
/// blocks, one per worker. Callers must write results into per-index slots so
/// the outcome does not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace snrge
