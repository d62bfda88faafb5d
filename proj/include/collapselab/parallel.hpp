#pragma once

// Index-parallel loop. Each index writes only its own output slot, so the
// result does not depend on the thread count.

#include <cstddef>
#include <functional>

namespace collapselab {

void set_thread_count(unsigned n);
unsigned thread_count();

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace collapselab
