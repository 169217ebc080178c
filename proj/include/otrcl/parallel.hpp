#pragma once

#include <cstddef>
#include <functional>

namespace otrcl {

// Worker count: OTRCL_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

// Runs body(i) for i in [0, n). Iterations must be independent; each writes
// only its own outputs, so results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace otrcl
