#pragma once

#include <cstddef>
#include <functional>

namespace miaforge {

/// Worker count: MIA_FORGE_THREADS when set to a positive integer, else the
/// hardware concurrency (at least 1).
std::size_t thread_count();

/// Runs body(i) for i in [0, n) across up to thread_count() threads. Each
/// index is visited exactly once; the first exception thrown is rethrown
/// after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace miaforge
