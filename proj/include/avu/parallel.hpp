#pragma once

#include <cstddef>
#include <functional>

namespace avu {

// Upper bound on worker threads used by parallel_for (default 1).
void set_max_workers(std::size_t n);
std::size_t max_workers();

// Runs fn(i) for i in [0, n) on up to max_workers() threads. fn must only
// touch state owned by index i. The first exception thrown is rethrown after
// all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace avu
