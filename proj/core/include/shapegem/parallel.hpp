#pragma once

#include <cstdint>
#include <functional>

namespace shapegem {

// Worker cap: SHAPEGEM_THREADS if set, else hardware concurrency.
int max_threads();

// Overrides the cap for the current process (0 restores the default).
void set_max_threads(int n);

// Runs fn(i) for i in [0, n). Work items must write to disjoint outputs;
// reductions belong after the loop so results never depend on the thread
// count or schedule.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

} // namespace shapegem
