#pragma once

#include <cstddef>
#include <functional>

namespace harmscope {

/// Worker count from HARMSCOPE_THREADS (0 or unset = hardware concurrency).
std::size_t configured_threads();

/// Runs body(i) for i in [0, n). Each index runs exactly once; callers write
/// results into pre-sized slots so the outcome does not depend on scheduling.
/// The exception from the lowest failing index is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t threads = 0);

}  // namespace harmscope
