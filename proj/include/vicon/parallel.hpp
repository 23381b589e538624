#pragma once

#include <cstddef>
#include <functional>

namespace vicon {

// Worker count for data-parallel loops. 1 (the default) runs everything on the
// calling thread. Results never depend on this value: work is split into
// fixed-size chunks whose partial results are reduced in chunk order.
void set_num_threads(unsigned n);
unsigned num_threads() noexcept;

// Runs fn(i) for i in [0, count), distributing indices over the workers.
// The first exception thrown by any call is rethrown on the caller.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace vicon
