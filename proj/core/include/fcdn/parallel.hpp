#pragma once

#include <cstdint>
#include <functional>

namespace fcdn {

// Worker cap: FCDN_THREADS when set (>=1), else hardware concurrency.
int worker_count();

// Runs fn(i) for i in [0, n) across workers in contiguous chunks. Callers
// must only write to disjoint outputs per index; result is then independent
// of the schedule. Falls back to a plain loop for one worker or tiny n.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace fcdn
