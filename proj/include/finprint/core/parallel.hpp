#pragma once

#include <cstddef>
#include <functional>

namespace finprint {

/// Process-wide cap on worker threads. 0 means "available cores".
void set_max_threads(unsigned n);
unsigned max_threads();

/// Runs fn(i) for i in [0, n), spread over at most max_threads() workers.
/// Callers must make fn(i) independent of which thread runs it; results are
/// then independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace finprint
