#pragma once

#include <cstddef>
#include <functional>

namespace wafertopo {

// Worker count: WAFERTOPO_THREADS if set, else std::thread::hardware_concurrency().
int default_thread_count();

// Calls fn(i) for every i in [0, n) exactly once, spread over up to `threads`
// workers. fn must not depend on execution order; callers that need a
// deterministic reduction write per-index results and reduce afterwards.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int threads = 0);

}  // namespace wafertopo
