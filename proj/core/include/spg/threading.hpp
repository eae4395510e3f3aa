#pragma once

#include <cstdint>
#include <functional>

namespace spg {

/// Global worker-thread cap; defaults to hardware concurrency.
int max_threads();
void set_max_threads(int n);

/// Runs fn(begin, end) over disjoint index ranges covering [0, n).
///
/// Ranges are fixed by n and grain alone (never by the thread count), so any
/// per-range work that derives RNG substreams from indices is bit-identical
/// regardless of parallelism. Exceptions from workers are rethrown.
void parallel_ranges(std::int64_t n, std::int64_t grain,
                     const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace spg
