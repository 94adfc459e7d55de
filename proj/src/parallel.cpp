#include "siammm/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace siammm {

namespace {
int g_max_threads = 0;  // 0 = hardware default
}

void set_max_threads(int n) {
    if (n <= 0) {
        g_max_threads = 0;
        omp_set_num_threads(omp_get_num_procs());
    } else {
        g_max_threads = n;
        omp_set_num_threads(n);
    }
}

int max_threads() {
    return g_max_threads > 0 ? g_max_threads : omp_get_num_procs();
}

int threads_from_env() {
    const char* s = std::getenv("SIAMMM_THREADS");
    if (!s || !*s) return 0;
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (end == s || *end != '\0' || v <= 0) return 0;
    return static_cast<int>(v);
}

}  // namespace siammm
