#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>

namespace siammm {

// Worker-count cap shared by every OpenMP kernel. n <= 0 resets to the
// machine's hardware parallelism. Thread count never changes results:
// all kernels write per-index outputs or reduce in a fixed order.
void set_max_threads(int n);
int max_threads();

// Reads SIAMMM_THREADS, returns 0 when unset or unparsable.
int threads_from_env();

// Runs body(i) for i in [0, n). body must only touch state owned by index i.
// Exceptions cannot unwind out of an OpenMP region, so the first one thrown
// is captured and rethrown on the calling thread.
template <class F>
void parallel_for(std::size_t n, F&& body) {
    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(siammm_parallel_for_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace siammm
