#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <omp.h>

namespace mfsmp::detail {

// Splits [0, n) into one contiguous block per thread and runs body(begin, end)
// on each. Every index is processed by exactly one call, so results written
// per index are independent of the thread count. The first exception thrown
// by any block is rethrown on the calling thread.
template <class Body>
void parallel_blocks(std::size_t n, Body&& body) {
    std::exception_ptr error;
#pragma omp parallel
    {
        const auto threads = static_cast<std::size_t>(omp_get_num_threads());
        const auto id = static_cast<std::size_t>(omp_get_thread_num());
        const std::size_t chunk = (n + threads - 1) / threads;
        const std::size_t begin = std::min(n, id * chunk);
        const std::size_t end = std::min(n, begin + chunk);
        if (begin < end) {
            try {
                body(begin, end);
            } catch (...) {
#pragma omp critical(mfsmp_parallel_error)
                if (!error) error = std::current_exception();
            }
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace mfsmp::detail
