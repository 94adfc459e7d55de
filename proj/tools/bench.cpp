// Times the parallel mixture kernels against their serial reference twins and
// checks that both produce bitwise-identical results.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <random>

#include "siammm/mixture.hpp"
#include "siammm/parallel.hpp"
#include "siammm/vmf.hpp"

using namespace siammm;

namespace {

template <typename F>
double time_best(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        const double s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (s < best) best = s;
    }
    return best;
}

void report(const char* name, double serial_s, double parallel_s, bool match) {
    std::printf("%-18s %10.4fs %10.4fs %7.2fx   %s\n", name, serial_s, parallel_s,
                serial_s / parallel_s, match ? "bitwise match" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial vs parallel mixture kernel benchmark"};
    std::size_t n = 20000, d = 64, k = 100;
    int reps = 3, threads = 0;
    std::uint64_t seed = 0;
    app.add_option("--n", n, "sample count");
    app.add_option("--d", d, "embedding dimension");
    app.add_option("--k", k, "component count");
    app.add_option("--reps", reps, "repetitions (best-of)");
    app.add_option("--threads", threads, "thread cap (default: all cores)");
    app.add_option("--seed", seed, "rng seed");
    CLI11_PARSE(app, argc, argv);

    set_max_threads(threads);
    std::mt19937_64 rng(seed);
    Matrix x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        Vec v = vmf::sample_unit_sphere(d, rng);
        x.set_row(i, v);
    }
    mixture::MixtureState state = mixture::init_centroids(x, k, rng, 20.0);
    std::cout << "n=" << n << " d=" << d << " K=" << state.k()
              << " threads=" << max_threads() << " reps=" << reps << "\n\n";
    std::printf("%-18s %11s %11s %8s\n", "kernel", "serial", "parallel", "speedup");

    mixture::AssignmentTable as, ap;
    const double ts_e = time_best(reps, [&] { as = mixture::e_step_hard_serial(x, state); });
    const double tp_e = time_best(reps, [&] { ap = mixture::e_step_hard(x, state); });
    report("e_step_hard", ts_e, tp_e, as.cluster_of == ap.cluster_of);

    Matrix rs, rp;
    const double ts_r =
        time_best(reps, [&] { rs = mixture::responsibilities_serial(x, state); });
    const double tp_r = time_best(reps, [&] { rp = mixture::responsibilities(x, state); });
    report("responsibilities", ts_r, tp_r,
           rs.data.size() == rp.data.size() &&
               std::memcmp(rs.data.data(), rp.data.data(),
                           rs.data.size() * sizeof(double)) == 0);

    double ls = 0.0, lp = 0.0;
    const double ts_l =
        time_best(reps, [&] { ls = mixture::log_likelihood_serial(x, state); });
    const double tp_l = time_best(reps, [&] { lp = mixture::log_likelihood(x, state); });
    report("log_likelihood", ts_l, tp_l, std::memcmp(&ls, &lp, sizeof(double)) == 0);

    const bool ok = as.cluster_of == ap.cluster_of &&
                    std::memcmp(rs.data.data(), rp.data.data(),
                                rs.data.size() * sizeof(double)) == 0 &&
                    std::memcmp(&ls, &lp, sizeof(double)) == 0;
    return ok ? 0 : 1;
}
