#pragma once

#include <cstddef>
#include <functional>

namespace benn {

// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware
// concurrency). Static contiguous partition; callers write results into
// per-index slots so reductions stay in index order.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace benn
