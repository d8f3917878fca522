#pragma once

#include <functional>

namespace corrfield {

// Resolve a requested worker count: values <= 0 mean "auto" (hardware
// concurrency clamped to [1, 8]).
int resolve_threads(int requested);

// Run fn(i) for every i in [0, n) across `threads` workers. Work is split
// into contiguous index ranges. Callers must write results into preallocated
// per-index slots and reduce in index order afterwards, so the partition
// never influences the output.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace corrfield
