#pragma once

#include <cstddef>
#include <functional>

namespace cfp {

// Worker count used when callers pass 0. Defaults to 1.
void set_default_threads(std::size_t n);
std::size_t default_threads();

// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = default).
// Each index runs exactly once; the first exception thrown is rethrown after
// all workers stop. Callers write results by index, so output order never
// depends on scheduling.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace cfp
