#pragma once

#include <cstddef>
#include <functional>

namespace amdm {

/// Worker count: AMDM_THREADS if set (>= 1), else hardware concurrency.
std::size_t thread_budget();

/// Runs fn(i) for i in [0, n) on up to thread_budget() threads. Callers write
/// results into per-index slots and reduce them in index order afterwards.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace amdm
