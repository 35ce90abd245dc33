#pragma once

#include <cstddef>
#include <functional>

namespace splatforge {

/// Worker count: SPLATFORGE_THREADS if set to a positive integer, otherwise
/// the hardware concurrency.
int worker_count();

/// Overrides the worker count for the current process (0 restores the
/// environment/hardware default).
void set_worker_count(int n);

/// Runs body(i) for i in [0, n). Each index is executed exactly once; callers
/// write results into per-index slots and reduce afterwards in index order,
/// which keeps every result independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace splatforge
