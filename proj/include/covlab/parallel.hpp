#pragma once

#include <cstddef>
#include <functional>

namespace covlab {

/// Worker count used when callers pass 0: hardware concurrency, at least 1.
std::size_t default_threads();

/// Runs body(i) for i in [0, count) on up to `threads` workers (0 = default).
/// Workers claim indices one at a time; callers write results by index, so
/// the outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace covlab
