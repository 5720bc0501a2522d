#pragma once

#include <cstddef>
#include <functional>

namespace udfc {

/// Worker count: UDFC_THREADS when set (>= 1), else hardware concurrency,
/// overridable per process with set_thread_limit.
std::size_t thread_limit();
void set_thread_limit(std::size_t threads);  // 0 restores the environment default

/// Runs fn(i) for i in [0, n). Iterations must not share mutable state.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace udfc
