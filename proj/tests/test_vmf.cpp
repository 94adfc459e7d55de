#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "siammm/vmf.hpp"

using namespace siammm;
using namespace siammm::vmf;

TEST_CASE("log_norm_const uniform limit and closed forms") {
    CHECK(log_norm_const(3, 0.0) == doctest::Approx(std::log(1.0 / (4.0 * M_PI))).epsilon(1e-12));
    CHECK(log_norm_const(3, 2.0) ==
          doctest::Approx(oracles::log_c3_closed_form(2.0)).epsilon(1e-12));
    CHECK(log_norm_const(2, 1.0) ==
          doctest::Approx(-std::log(2.0 * M_PI * oracles::bessel_i0_series(1.0)))
              .epsilon(1e-12));
}

TEST_CASE("log_norm_const matches d=3 closed form across regimes") {
    for (double kappa : {0.1, 1.0, 10.0, 100.0}) {
        const double got = log_norm_const(3, kappa);
        const double want = oracles::log_c3_closed_form(kappa);
        CHECK(std::abs(got - want) < 1e-9);
    }
}

TEST_CASE("log_norm_const rejects bad arguments") {
    CHECK_THROWS_AS(log_norm_const(1, 1.0), std::domain_error);
    CHECK_THROWS_AS(log_norm_const(3, -0.5), std::domain_error);
    CHECK_THROWS_AS(log_norm_const(3, std::nan("")), std::domain_error);
    CHECK_THROWS_AS(log_norm_const(3, INFINITY), std::domain_error);
}

TEST_CASE("log_bessel_i continuity across the series/asymptotic switch") {
    // absolute spacing so the function's own slope (about 1) stays below tol
    for (double nu : {0.0, 0.5, 3.0, 31.5}) {
        const double x = 20.0 * std::max(1.0, nu);
        const double lo = log_bessel_i(nu, x - 1e-9);
        const double hi = log_bessel_i(nu, x + 1e-9);
        CHECK(std::abs(lo - hi) < 1e-7);
    }
}

TEST_CASE("log_bessel_i half-integer closed form in both regimes") {
    // I_{1/2}(x) = sqrt(2/(pi x)) sinh x, stable in log form. Tolerance 5e-9
    // absorbs the expansion truncation right at the series/asymptotic switch.
    auto want = [](double x) {
        return 0.5 * std::log(2.0 / (M_PI * x)) + x + std::log1p(-std::exp(-2.0 * x)) -
               std::log(2.0);
    };
    for (double x : {0.5, 5.0, 19.9, 20.1, 100.0, 1000.0, 1e5}) {
        const double w = want(x);
        CHECK(std::abs(log_bessel_i(0.5, x) - w) < 5e-9 + 1e-13 * std::abs(w));
    }
}

TEST_CASE("log_density basics") {
    VmfParams uniform({0.0, 0.0, 1.0}, 0.0);
    Vec a = normalized({1.0, 2.0, 3.0});
    Vec b = normalized({-4.0, 0.5, 1.0});
    CHECK(log_density(a, uniform) == doctest::Approx(log_density(b, uniform)).epsilon(1e-15));
    CHECK(log_density(a, uniform) ==
          doctest::Approx(std::log(1.0 / (4.0 * M_PI))).epsilon(1e-12));

    VmfParams p({0.0, 0.0, 1.0}, 3.0);
    CHECK(log_density(p.mu, p) > log_density(a, p));
    CHECK(log_density(p.mu, p) > log_density(b, p));

    VmfParams circle({1.0, 0.0}, 1.0);
    Vec orth = {0.0, 1.0};
    CHECK(log_density(orth, circle) ==
          doctest::Approx(-std::log(2.0 * M_PI * oracles::bessel_i0_series(1.0)))
              .epsilon(1e-12));

    Vec wrong_dim = {1.0, 0.0, 0.0};
    CHECK_THROWS_AS(log_density(wrong_dim, circle), std::invalid_argument);
}

TEST_CASE("density integrates to one on the circle") {
    for (double kappa : {0.0, 1.0, 5.0}) {
        VmfParams p({1.0, 0.0}, kappa);
        const double integral = oracles::trapezoid_circle(
            [&](double theta) {
                Vec v = {std::cos(theta), std::sin(theta)};
                return std::exp(log_density(v, p));
            },
            4096);
        CHECK(std::abs(integral - 1.0) < 1e-6);
    }
}

namespace {

// plane rotation applied in place
void rotate(Vec& v, std::size_t i, std::size_t j, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    const double vi = v[i], vj = v[j];
    v[i] = c * vi - s * vj;
    v[j] = s * vi + c * vj;
}

}  // namespace

TEST_CASE("log_density is rotation invariant") {
    std::mt19937_64 rng(7);
    Vec mu = sample_unit_sphere(5, rng);
    Vec v = sample_unit_sphere(5, rng);
    const double kappa = 4.2;
    const double before = log_density(v, VmfParams(mu, kappa));
    for (auto [i, j, a] : {std::tuple{0u, 3u, 0.7}, {1u, 4u, -1.3}, {2u, 0u, 2.1}}) {
        rotate(mu, i, j, a);
        rotate(v, i, j, a);
    }
    normalize_in_place(mu);
    const double after = log_density(v, VmfParams(mu, kappa));
    CHECK(std::abs(after - before) < 1e-12);
}

TEST_CASE("estimate_mean on simple configurations") {
    SUBCASE("single point") {
        Matrix pts(1, 3);
        Vec v = normalized({0.3, -0.2, 0.9});
        pts.set_row(0, v);
        Vec w = {1.0};
        auto est = estimate_mean(pts, w);
        for (int j = 0; j < 3; ++j) {
            CHECK(est.r[j] == doctest::Approx(v[j]).epsilon(1e-15));
            CHECK(est.mu_hat[j] == doctest::Approx(v[j]).epsilon(1e-12));
        }
        CHECK(est.r_norm == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("antipodal pair is degenerate") {
        Matrix pts(2, 2);
        pts.set_row(0, Vec{1.0, 0.0});
        pts.set_row(1, Vec{-1.0, 0.0});
        Vec w = {1.0, 1.0};
        CHECK_THROWS_AS(estimate_mean(pts, w), degenerate_resultant_error);
    }
    SUBCASE("three points on the circle") {
        const double deg = M_PI / 180.0;
        Matrix pts(3, 2);
        double rx = 0.0, ry = 0.0;
        int row = 0;
        for (double ang : {0.0, 30.0, 60.0}) {
            Vec v = {std::cos(ang * deg), std::sin(ang * deg)};
            rx += v[0] / 3.0;
            ry += v[1] / 3.0;
            pts.set_row(row++, v);
        }
        Vec w = {1.0, 1.0, 1.0};
        auto est = estimate_mean(pts, w);
        CHECK(est.r_norm == doctest::Approx(std::hypot(rx, ry)).epsilon(1e-14));
        CHECK(std::atan2(est.mu_hat[1], est.mu_hat[0]) ==
              doctest::Approx(30.0 * deg).epsilon(1e-12));
    }
}

TEST_CASE("estimate_mean weight-scale invariance") {
    std::mt19937_64 rng(11);
    Matrix pts(20, 4);
    for (int i = 0; i < 20; ++i) pts.set_row(i, sample_unit_sphere(4, rng));
    std::uniform_real_distribution<double> unif(0.1, 2.0);
    Vec w(20);
    for (double& x : w) x = unif(rng);
    auto base = estimate_mean(pts, w);
    const double base_kappa = estimate_kappa(base.r_norm, 4);
    for (double c : {1e-6, 3.0, 1e6}) {
        Vec ws = w;
        for (double& x : ws) x *= c;
        auto scaled = estimate_mean(pts, ws);
        CHECK(std::abs(scaled.r_norm - base.r_norm) < 1e-12);
        for (int j = 0; j < 4; ++j) {
            CHECK(std::abs(scaled.r[j] - base.r[j]) < 1e-12);
            CHECK(std::abs(scaled.mu_hat[j] - base.mu_hat[j]) < 1e-12);
        }
        CHECK(std::abs(estimate_kappa(scaled.r_norm, 4) - base_kappa) < 1e-12);
    }
}

TEST_CASE("estimate_kappa formula and clamps") {
    CHECK(estimate_kappa(0.0, 3) == 0.0);
    CHECK(estimate_kappa(0.5, 4) == doctest::Approx(2.5).epsilon(1e-15));
    Guards g;
    CHECK(estimate_kappa(1.0, 3) == g.kappa_max);
    CHECK_THROWS_AS(estimate_kappa(0.5, 1), std::domain_error);
}

TEST_CASE("sampler output shape and norms") {
    std::mt19937_64 rng(3);
    VmfParams p(normalized({1.0, -1.0, 0.5, 2.0}), 12.0);
    CHECK(sample_vmf(p, 0, rng).rows == 0);
    Matrix s = sample_vmf(p, 200, rng);
    CHECK(s.rows == 200);
    CHECK(s.cols == 4);
    for (std::size_t i = 0; i < s.rows; ++i) CHECK(is_unit(s.row_span(i)));
}

TEST_CASE("sampler is deterministic under a fixed seed") {
    VmfParams p(normalized({0.2, 0.9, -0.1}), 5.0);
    std::mt19937_64 a(42), b(42);
    Matrix sa = sample_vmf(p, 50, a);
    Matrix sb = sample_vmf(p, 50, b);
    CHECK(sa.data == sb.data);
}

TEST_CASE("concentrated samples point along the mean") {
    std::mt19937_64 rng(5);
    Vec mu = sample_unit_sphere(8, rng);
    VmfParams p(mu, 200.0);
    Matrix s = sample_vmf(p, 5000, rng);
    Vec w(s.rows, 1.0);
    auto est = estimate_mean(s, w);
    CHECK(dot(est.mu_hat, mu) >= 0.999);
}

TEST_CASE("kappa zero gives a near-uniform sample") {
    std::mt19937_64 rng(9);
    VmfParams p({0.0, 0.0, 1.0}, 0.0);
    Matrix s = sample_vmf(p, 10000, rng);
    Vec w(s.rows, 1.0);
    auto est = estimate_mean(s, w);
    CHECK(est.r_norm < 0.05);
}

TEST_CASE("estimators recover sampler parameters") {
    std::mt19937_64 rng(13);
    Vec mu = sample_unit_sphere(8, rng);
    const double kappa = 20.0;
    Matrix s = sample_vmf(VmfParams(mu, kappa), 10000, rng);
    Vec w(s.rows, 1.0);
    auto est = estimate_mean(s, w);
    CHECK(dot(est.mu_hat, mu) >= 0.999);
    const double kappa_hat = estimate_kappa(est.r_norm, 8);
    CHECK(std::abs(kappa_hat - kappa) / kappa < 0.10);
}

TEST_CASE("two dimensional sampling works") {
    std::mt19937_64 rng(21);
    VmfParams p({0.0, 1.0}, 10.0);
    Matrix s = sample_vmf(p, 2000, rng);
    Vec w(s.rows, 1.0);
    auto est = estimate_mean(s, w);
    CHECK(dot(est.mu_hat, p.mu) > 0.99);
    for (std::size_t i = 0; i < s.rows; ++i) CHECK(is_unit(s.row_span(i)));
}

TEST_CASE("VmfParams validates inputs") {
    CHECK_THROWS_AS(VmfParams({2.0, 0.0}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(VmfParams({1.0, 0.0}, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(VmfParams({1.0}, 1.0), std::invalid_argument);
    Guards g;
    CHECK_THROWS_AS(VmfParams({1.0, 0.0}, g.kappa_max * 2.0), std::invalid_argument);
}
