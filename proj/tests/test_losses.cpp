#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "oracles.hpp"
#include "siammm/losses.hpp"
#include "siammm/vmf.hpp"

using namespace siammm;
using namespace siammm::losses;
using mixture::MixtureState;
using mixture::VmfComponent;

namespace {

MixtureState random_state(std::size_t k, std::size_t d, std::mt19937_64& rng,
                          double kappa_lo = 0.5, double kappa_hi = 8.0) {
    std::uniform_real_distribution<double> kap(kappa_lo, kappa_hi);
    std::uniform_real_distribution<double> unif(0.2, 1.0);
    MixtureState state;
    state.dim = d;
    Vec alphas(k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        alphas[j] = unif(rng);
        total += alphas[j];
    }
    for (std::size_t j = 0; j < k; ++j) {
        VmfComponent c;
        c.id = static_cast<std::uint32_t>(j);
        c.mu = vmf::sample_unit_sphere(d, rng);
        c.kappa = kap(rng);
        c.alpha = alphas[j] / total;
        c.member_count = 5;
        c.r = c.mu;
        for (double& x : c.r) x *= 0.7;
        state.components.push_back(std::move(c));
    }
    return state;
}

// central finite differences of a scalar field over R^d
Vec fd_grad(const std::function<double(std::span<const double>)>& f, const Vec& x,
            double eps = 1e-6) {
    Vec g(x.size());
    Vec p = x;
    for (std::size_t j = 0; j < x.size(); ++j) {
        p[j] = x[j] + eps;
        const double hi = f(p);
        p[j] = x[j] - eps;
        const double lo = f(p);
        p[j] = x[j];
        g[j] = (hi - lo) / (2.0 * eps);
    }
    return g;
}

// symmetric relative error so vanishing gradients do not blow up the ratio
double rel_grad_err(const Vec& got, const Vec& want) {
    double num = 0.0, a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < got.size(); ++j) {
        num += (got[j] - want[j]) * (got[j] - want[j]);
        a += got[j] * got[j];
        b += want[j] * want[j];
    }
    return std::sqrt(num) / std::max(1e-8, std::sqrt(a) + std::sqrt(b));
}

}  // namespace

TEST_CASE("soft_assign_weights with h=1 is exactly one") {
    std::mt19937_64 rng(7);
    MixtureState state = random_state(5, 4, rng);
    Vec v = vmf::sample_unit_sphere(4, rng);
    auto sa = soft_assign_weights(v, state, 1, 0.02);
    REQUIRE(sa.weights.size() == 1);
    CHECK(sa.weights[0] == 1.0);
}

TEST_CASE("soft_assign_weights flattens at high temperature") {
    std::mt19937_64 rng(11);
    MixtureState state = random_state(6, 5, rng);
    Vec v = vmf::sample_unit_sphere(5, rng);
    auto sa = soft_assign_weights(v, state, 4, 1e6);
    for (double w : sa.weights) CHECK(std::abs(w - 0.25) < 1e-3);
}

TEST_CASE("soft_assign_weights matches direct softmax arithmetic") {
    // mu placed so the cosines against e1 are exactly 0.9, 0.5, 0.1
    const double sims[] = {0.9, 0.5, 0.1};
    MixtureState state;
    state.dim = 3;
    for (int j = 0; j < 3; ++j) {
        VmfComponent c;
        c.id = j;
        c.mu = {sims[j], std::sqrt(1.0 - sims[j] * sims[j]), 0.0};
        c.kappa = 1.0;
        c.alpha = 1.0 / 3;
        c.member_count = 5;
        c.r = c.mu;
        state.components.push_back(std::move(c));
    }
    Vec v = {1.0, 0.0, 0.0};
    const double tau = 0.02;
    auto sa = soft_assign_weights(v, state, 3, tau);
    double den = 0.0;
    for (double s : sims) den += std::exp((s - 0.9) / tau);
    for (int j = 0; j < 3; ++j) {
        const double want = std::exp((sims[j] - 0.9) / tau) / den;
        CHECK(std::abs(sa.weights[j] - want) < 1e-12);
    }
}

TEST_CASE("soft_assign_weights are normalized across random cases") {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 100; ++t) {
        MixtureState state = random_state(8, 6, rng);
        Vec v = vmf::sample_unit_sphere(6, rng);
        for (std::size_t h : {std::size_t{2}, std::size_t{5}, std::size_t{8}}) {
            auto sa = soft_assign_weights(v, state, h, 0.02);
            double total = 0.0;
            for (double w : sa.weights) {
                CHECK(w > 0.0);
                CHECK(w <= 1.0);
                total += w;
            }
            CHECK(std::abs(total - 1.0) < 1e-12);
        }
    }
    CHECK_THROWS_AS(
        soft_assign_weights(vmf::sample_unit_sphere(6, rng), random_state(3, 6, rng), 2, 0.0),
        std::invalid_argument);
}

TEST_CASE("cluster_loss with h=1 reduces to the hard-assignment loss") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 1000; ++t) {
        MixtureState state = random_state(6, 5, rng);
        Vec v = vmf::sample_unit_sphere(5, rng);
        auto lv = cluster_loss(v, state, 1, 0.02);
        const auto ids = mixture::nearest_centroids(v, state, 1);
        const auto& c = state.components[state.index_of(ids[0])];
        const double want = -c.kappa * dot(v, c.mu);
        CHECK(std::abs(lv.value - want) <= 1e-12);
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(std::abs(lv.grad[j] + c.kappa * c.mu[j]) <= 1e-12);
    }
}

TEST_CASE("cluster_loss gradient matches finite differences") {
    std::mt19937_64 rng(19);
    for (int t = 0; t < 200; ++t) {
        MixtureState state = random_state(7, 6, rng);
        Vec v = vmf::sample_unit_sphere(6, rng);
        const std::size_t h = 1 + (t % 5);
        const double tau = 0.02 + 0.3 * (t % 3);
        const auto ids = mixture::nearest_centroids(v, state, h);
        for (bool detach : {false, true}) {
            ClusterLossOptions opts;
            opts.detach_weights = detach;
            auto lv = cluster_loss_with_ids(v, state, ids, tau, opts);
            if (!detach) {
                Vec fd = fd_grad(
                    [&](std::span<const double> x) {
                        return cluster_loss_with_ids(x, state, ids, tau, opts).value;
                    },
                    v);
                CHECK(rel_grad_err(lv.grad, fd) < 1e-5);
            } else {
                // the detached grad differentiates a surrogate whose pi is
                // frozen at the base point; probe that surrogate directly
                auto sa = soft_assign_weights(v, state, h, tau);
                Vec fd = fd_grad(
                    [&](std::span<const double> x) {
                        Vec t2(h);
                        for (std::size_t j = 0; j < h; ++j) {
                            const auto& c = state.components[state.index_of(sa.ids[j])];
                            t2[j] = std::log(sa.weights[j]) + c.kappa * dot(x, c.mu);
                        }
                        double m = t2[0];
                        for (double q : t2) m = std::max(m, q);
                        double acc = 0.0;
                        for (double q : t2) acc += std::exp(q - m);
                        return -(m + std::log(acc));
                    },
                    v);
                CHECK(rel_grad_err(lv.grad, fd) < 1e-5);
            }
        }
    }
}

TEST_CASE("cluster_loss on identical centroids collapses to one term") {
    const double c = 3.5;
    Vec mu = normalized({0.2, -0.7, 0.4, 0.1});
    MixtureState state;
    state.dim = 4;
    for (int j = 0; j < 4; ++j) {
        VmfComponent comp;
        comp.id = j;
        comp.mu = mu;
        comp.kappa = c;
        comp.alpha = 0.25;
        comp.member_count = 5;
        comp.r = mu;
        state.components.push_back(std::move(comp));
    }
    std::mt19937_64 rng(23);
    for (int t = 0; t < 20; ++t) {
        Vec v = vmf::sample_unit_sphere(4, rng);
        auto lv = cluster_loss(v, state, 4, 0.02);
        CHECK(std::abs(lv.value + c * dot(mu, v)) < 1e-12);
    }
}

TEST_CASE("cluster_loss is bounded below by minus the largest kappa") {
    std::mt19937_64 rng(29);
    for (int t = 0; t < 200; ++t) {
        MixtureState state = random_state(6, 5, rng, 0.5, 30.0);
        double kmax = 0.0;
        for (const auto& c : state.components) kmax = std::max(kmax, c.kappa);
        Vec v = vmf::sample_unit_sphere(5, rng);
        auto lv = cluster_loss(v, state, 1 + (t % 6), 0.02);
        CHECK(lv.value >= -kmax - 1e-9);
    }
}

TEST_CASE("cluster_loss tangent projection is orthogonal to v") {
    std::mt19937_64 rng(31);
    MixtureState state = random_state(5, 6, rng);
    Vec v = vmf::sample_unit_sphere(6, rng);
    ClusterLossOptions opts;
    opts.project_tangent = true;
    auto lv = cluster_loss(v, state, 3, 0.02, opts);
    CHECK(std::abs(dot(lv.grad, v)) < 1e-12);
}

TEST_CASE("instance_loss value and stop-gradient structure") {
    Vec u = normalized({0.6, -0.3, 0.9});
    SUBCASE("all four identical gives -2 and tangent-zero gradient") {
        auto r = instance_loss(u, u, u, u);
        CHECK(r.value == doctest::Approx(-2.0).epsilon(1e-15));
        // grad_v1 = -u: its tangential part at u is zero
        Vec tang = r.grad_v1;
        const double p = dot(tang, u);
        for (std::size_t j = 0; j < u.size(); ++j) tang[j] -= p * u[j];
        CHECK(l2_norm(tang) < 1e-12);
    }
    SUBCASE("orthogonal pairs give zero") {
        Vec a = {1.0, 0.0, 0.0};
        Vec b = {0.0, 1.0, 0.0};
        Vec c = {0.0, 0.0, 1.0};
        auto r = instance_loss(a, b, c, c);
        CHECK(r.value == doctest::Approx(0.0).epsilon(1e-15));
    }
    SUBCASE("non-unit input rejected") {
        Vec bad = {2.0, 0.0, 0.0};
        CHECK_THROWS_AS(instance_loss(bad, u, u, u), std::invalid_argument);
    }
}

TEST_CASE("instance_loss gradients match finite differences") {
    std::mt19937_64 rng(37);
    for (int t = 0; t < 200; ++t) {
        Vec v1 = vmf::sample_unit_sphere(5, rng);
        Vec v2 = vmf::sample_unit_sphere(5, rng);
        Vec v1m = vmf::sample_unit_sphere(5, rng);
        Vec v2m = vmf::sample_unit_sphere(5, rng);
        auto r = instance_loss(v1, v2, v1m, v2m);
        Vec fd1 = fd_grad(
            [&](std::span<const double> x) { return instance_loss(x, v2, v1m, v2m).value; },
            v1);
        Vec fd2 = fd_grad(
            [&](std::span<const double> x) { return instance_loss(v1, x, v1m, v2m).value; },
            v2);
        CHECK(rel_grad_err(r.grad_v1, fd1) < 1e-5);
        CHECK(rel_grad_err(r.grad_v2, fd2) < 1e-5);
        // the exact formula: gradient is minus the stopped partner embedding
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(r.grad_v1[j] == -v2m[j]);
            CHECK(r.grad_v2[j] == -v1m[j]);
        }
    }
}

TEST_CASE("total_loss adds term-wise") {
    LossValueGrad a{1.5, {1.0, -2.0}};
    LossValueGrad b{-0.5, {0.25, 4.0}};
    auto s = total_loss(a, b);
    CHECK(s.value == doctest::Approx(1.0));
    CHECK(s.grad[0] == doctest::Approx(1.25));
    CHECK(s.grad[1] == doctest::Approx(2.0));

    LossValueGrad zero{0.0, {0.0, 0.0}};
    auto sa = total_loss(a, zero);
    CHECK(sa.value == a.value);
    CHECK(sa.grad == a.grad);
    auto sb = total_loss(zero, b);
    CHECK(sb.value == b.value);
    CHECK(sb.grad == b.grad);

    LossValueGrad wrong{0.0, {0.0, 0.0, 0.0}};
    CHECK_THROWS_AS(total_loss(a, wrong), std::invalid_argument);
}

TEST_CASE("nce_centroid_loss basics") {
    std::mt19937_64 rng(41);
    MixtureState state = random_state(4, 5, rng);
    Vec v = vmf::sample_unit_sphere(5, rng);

    SUBCASE("no negatives means zero loss") {
        auto lv = nce_centroid_loss(v, 1, {}, state);
        CHECK(lv.value == doctest::Approx(0.0).epsilon(1e-15));
        for (double g : lv.grad) CHECK(std::abs(g) < 1e-15);
    }
    SUBCASE("identical centroids give the uniform-logit value") {
        MixtureState same;
        same.dim = 5;
        Vec mu = vmf::sample_unit_sphere(5, rng);
        for (int j = 0; j < 4; ++j) {
            VmfComponent c;
            c.id = j;
            c.mu = mu;
            c.kappa = 2.0;
            c.alpha = 0.25;
            c.r = mu;
            same.components.push_back(std::move(c));
        }
        std::vector<std::uint32_t> negs = {1, 2, 3};
        auto lv = nce_centroid_loss(v, 0, negs, same);
        CHECK(lv.value == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
    SUBCASE("matches direct softmax cross-entropy and finite differences") {
        std::vector<std::uint32_t> negs = {0, 2, 3};
        auto lv = nce_centroid_loss(v, 1, negs, state);
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            const auto& c = state.components[j];
            const double e = std::exp(c.kappa * dot(v, c.mu));
            den += e;
            if (j == 1) num = e;
        }
        CHECK(std::abs(lv.value + std::log(num / den)) < 1e-12);
        Vec fd = fd_grad(
            [&](std::span<const double> x) { return nce_centroid_loss(x, 1, negs, state).value; },
            v);
        CHECK(rel_grad_err(lv.grad, fd) < 1e-5);
    }
    SUBCASE("invalid ids rejected") {
        std::vector<std::uint32_t> with_pos = {1, 2};
        CHECK_THROWS_AS(nce_centroid_loss(v, 1, with_pos, state), std::invalid_argument);
        std::vector<std::uint32_t> dead = {9};
        CHECK_THROWS_AS(nce_centroid_loss(v, 1, dead, state), std::out_of_range);
    }
}

TEST_CASE("nce_instance_loss basics") {
    std::mt19937_64 rng(43);
    VmfComponent comp;
    comp.id = 0;
    comp.mu = vmf::sample_unit_sphere(6, rng);
    comp.kappa = 1.0;
    comp.alpha = 1.0;
    comp.r = comp.mu;

    SUBCASE("no negatives means zero loss") {
        Matrix negs(0, 6);
        auto lv = nce_instance_loss(comp.mu, negs, comp);
        CHECK(lv.value == doctest::Approx(0.0).epsilon(1e-15));
    }
    SUBCASE("antipodal negatives give the closed-form value") {
        const std::size_t n_neg = 5;
        Matrix negs(n_neg, 6);
        Vec anti = comp.mu;
        for (double& x : anti) x = -x;
        for (std::size_t i = 0; i < n_neg; ++i) negs.set_row(i, anti);
        auto lv = nce_instance_loss(comp.mu, negs, comp);
        const double want = std::log(1.0 + n_neg * std::exp(-2.0));
        CHECK(std::abs(lv.value - want) < 1e-12);
    }
    SUBCASE("gradient matches finite differences") {
        for (int t = 0; t < 200; ++t) {
            VmfComponent c;
            c.id = 0;
            c.mu = vmf::sample_unit_sphere(6, rng);
            c.kappa = 0.5 + 0.03 * t;
            c.r = c.mu;
            Matrix negs(3, 6);
            for (int i = 0; i < 3; ++i) negs.set_row(i, vmf::sample_unit_sphere(6, rng));
            Vec v = vmf::sample_unit_sphere(6, rng);
            auto lv = nce_instance_loss(v, negs, c);
            Vec fd = fd_grad(
                [&](std::span<const double> x) { return nce_instance_loss(x, negs, c).value; },
                v);
            CHECK(rel_grad_err(lv.grad, fd) < 1e-5);
        }
    }
}
