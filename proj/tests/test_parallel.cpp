#include <doctest.h>

#include <cstring>
#include <random>

#include "siammm/evaluate.hpp"
#include "siammm/mixture.hpp"
#include "siammm/net.hpp"
#include "siammm/parallel.hpp"
#include "siammm/trainer.hpp"
#include "siammm/vmf.hpp"

using namespace siammm;

namespace {

struct thread_guard {
    ~thread_guard() { set_max_threads(0); }
};

Matrix random_unit_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Matrix x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        Vec v = vmf::sample_unit_sphere(d, rng);
        x.set_row(i, v);
    }
    return x;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols &&
           (a.data.empty() ||
            std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0);
}

}  // namespace

TEST_CASE("mixture kernels match their serial twins at every thread count") {
    thread_guard guard;
    Matrix x = random_unit_rows(700, 12, 42);
    std::mt19937_64 rng(9);
    mixture::MixtureState state = mixture::init_centroids(x, 15, rng, 5.0);

    const mixture::AssignmentTable ref_assign = mixture::e_step_hard_serial(x, state);
    const Matrix ref_resp = mixture::responsibilities_serial(x, state);
    const double ref_ll = mixture::log_likelihood_serial(x, state);

    for (int t : {1, 2, 3, 8}) {
        CAPTURE(t);
        set_max_threads(t);
        CHECK(mixture::e_step_hard(x, state).cluster_of == ref_assign.cluster_of);
        CHECK(bitwise_equal(mixture::responsibilities(x, state), ref_resp));
        const double ll = mixture::log_likelihood(x, state);
        CHECK(std::memcmp(&ll, &ref_ll, sizeof(double)) == 0);
    }
}

TEST_CASE("ami is identical across thread counts") {
    thread_guard guard;
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<std::uint32_t> pick(0, 11);
    std::vector<std::uint32_t> a(4000), b(4000);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = pick(rng);
        b[i] = pick(rng);
    }
    set_max_threads(1);
    const double ref = evaluate::ami(a, b);
    for (int t : {2, 3, 8}) {
        CAPTURE(t);
        set_max_threads(t);
        const double v = evaluate::ami(a, b);
        CHECK(std::memcmp(&v, &ref, sizeof(double)) == 0);
    }
}

TEST_CASE("batch embedding is identical across thread counts") {
    thread_guard guard;
    net::NetConfig nc;
    nc.in_dim = 10;
    nc.hidden = 16;
    nc.embed = 6;
    std::mt19937_64 rng(7);
    net::SiameseNet nn = net::make_net(nc, rng);
    Matrix x = random_unit_rows(300, 10, 5);

    set_max_threads(1);
    const Matrix ref_on = train::embed_all(nn, x, train::EmbedBranch::online);
    const Matrix ref_mom = train::embed_all(nn, x, train::EmbedBranch::momentum);
    for (int t : {2, 4}) {
        CAPTURE(t);
        set_max_threads(t);
        CHECK(bitwise_equal(train::embed_all(nn, x, train::EmbedBranch::online), ref_on));
        CHECK(bitwise_equal(train::embed_all(nn, x, train::EmbedBranch::momentum), ref_mom));
    }
}

TEST_CASE("thread cap setters") {
    thread_guard guard;
    set_max_threads(3);
    CHECK(max_threads() == 3);
    set_max_threads(0);
    CHECK(max_threads() >= 1);
}
