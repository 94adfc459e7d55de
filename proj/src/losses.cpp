#include "siammm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace siammm::losses {

namespace {

double log_sum_exp(std::span<const double> x) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : x) m = std::max(m, v);
    if (std::isinf(m)) return m;
    double acc = 0.0;
    for (double v : x) acc += std::exp(v - m);
    return m + std::log(acc);
}

}  // namespace

SoftAssignment soft_assign_weights(std::span<const double> v,
                                   const mixture::MixtureState& state, std::size_t h,
                                   double tau, bool use_alpha) {
    if (!(tau > 0.0)) throw std::invalid_argument("soft_assign_weights: tau must be > 0");
    SoftAssignment out;
    out.ids = mixture::nearest_centroids(v, state, h);
    out.tau = tau;
    out.h = h;
    if (h == 1) {
        out.weights = {1.0};
        return out;
    }
    Vec logits(h);
    for (std::size_t j = 0; j < h; ++j) {
        const auto& c = state.components[state.index_of(out.ids[j])];
        logits[j] = dot(v, c.mu) / tau + (use_alpha ? std::log(c.alpha) : 0.0);
    }
    const double lse = log_sum_exp(logits);
    out.weights.resize(h);
    for (std::size_t j = 0; j < h; ++j) out.weights[j] = std::exp(logits[j] - lse);
    return out;
}

LossValueGrad cluster_loss_with_ids(std::span<const double> v,
                                    const mixture::MixtureState& state,
                                    std::span<const std::uint32_t> ids, double tau,
                                    const ClusterLossOptions& opts) {
    if (!(tau > 0.0)) throw std::invalid_argument("cluster_loss: tau must be > 0");
    if (ids.empty()) throw std::invalid_argument("cluster_loss: empty membership set");
    const std::size_t h = ids.size();
    const std::size_t d = state.dim;
    if (v.size() != d) throw std::invalid_argument("cluster_loss: dimension mismatch");

    std::vector<const mixture::VmfComponent*> comps(h);
    Vec sim(h);
    for (std::size_t j = 0; j < h; ++j) {
        comps[j] = &state.components[state.index_of(ids[j])];
        sim[j] = dot(v, comps[j]->mu);
    }

    // log pi via softmax of the temperature logits; h = 1 short-circuits to
    // log pi = 0 so the hard-assignment reduction is exact
    Vec log_pi(h, 0.0);
    Vec pi(h, 1.0);
    if (h > 1) {
        Vec a(h);
        for (std::size_t j = 0; j < h; ++j)
            a[j] = sim[j] / tau + (opts.use_alpha ? std::log(comps[j]->alpha) : 0.0);
        const double lse_a = log_sum_exp(a);
        for (std::size_t j = 0; j < h; ++j) {
            log_pi[j] = a[j] - lse_a;
            pi[j] = std::exp(log_pi[j]);
        }
    }

    Vec t(h);
    for (std::size_t j = 0; j < h; ++j) t[j] = log_pi[j] + comps[j]->kappa * sim[j];
    const double lse_t = log_sum_exp(t);

    LossValueGrad out;
    out.value = -lse_t;
    out.grad.assign(d, 0.0);
    Vec q(h);
    for (std::size_t j = 0; j < h; ++j) q[j] = std::exp(t[j] - lse_t);

    if (opts.detach_weights || h == 1) {
        // h = 1: pi is the constant 1, so the through-pi term vanishes anyway
        for (std::size_t j = 0; j < h; ++j)
            for (std::size_t jj = 0; jj < d; ++jj)
                out.grad[jj] -= q[j] * comps[j]->kappa * comps[j]->mu[jj];
    } else {
        Vec mu_bar(d, 0.0);
        for (std::size_t j = 0; j < h; ++j)
            for (std::size_t jj = 0; jj < d; ++jj) mu_bar[jj] += pi[j] * comps[j]->mu[jj];
        for (std::size_t j = 0; j < h; ++j)
            for (std::size_t jj = 0; jj < d; ++jj)
                out.grad[jj] -= q[j] * (comps[j]->kappa * comps[j]->mu[jj] +
                                        (comps[j]->mu[jj] - mu_bar[jj]) / tau);
    }

    if (opts.project_tangent) {
        const double p = dot(out.grad, v);
        for (std::size_t jj = 0; jj < d; ++jj) out.grad[jj] -= p * v[jj];
    }
    return out;
}

LossValueGrad cluster_loss(std::span<const double> v, const mixture::MixtureState& state,
                           std::size_t h, double tau, const ClusterLossOptions& opts) {
    const auto ids = mixture::nearest_centroids(v, state, h);
    return cluster_loss_with_ids(v, state, ids, tau, opts);
}

InstanceLossResult instance_loss(std::span<const double> v1, std::span<const double> v2,
                                 std::span<const double> v1m, std::span<const double> v2m) {
    const std::size_t d = v1.size();
    if (v2.size() != d || v1m.size() != d || v2m.size() != d)
        throw std::invalid_argument("instance_loss: dimension mismatch");
    // tolerance leaves room for finite-difference probes of unit inputs
    check_unit(v1, "instance_loss v1", 1e-4);
    check_unit(v2, "instance_loss v2", 1e-4);
    check_unit(v1m, "instance_loss v1m", 1e-4);
    check_unit(v2m, "instance_loss v2m", 1e-4);
    InstanceLossResult out;
    out.value = -dot(v1, v2m) - dot(v2, v1m);
    out.grad_v1.resize(d);
    out.grad_v2.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        out.grad_v1[j] = -v2m[j];
        out.grad_v2[j] = -v1m[j];
    }
    return out;
}

LossValueGrad total_loss(const LossValueGrad& a, const LossValueGrad& b) {
    if (a.grad.size() != b.grad.size())
        throw std::invalid_argument("total_loss: gradient shape mismatch");
    LossValueGrad out;
    out.value = a.value + b.value;
    out.grad.resize(a.grad.size());
    for (std::size_t j = 0; j < a.grad.size(); ++j) out.grad[j] = a.grad[j] + b.grad[j];
    return out;
}

LossValueGrad nce_centroid_loss(std::span<const double> v, std::uint32_t pos_id,
                                std::span<const std::uint32_t> neg_ids,
                                const mixture::MixtureState& state) {
    if (v.size() != state.dim)
        throw std::invalid_argument("nce_centroid_loss: dimension mismatch");
    for (std::uint32_t id : neg_ids)
        if (id == pos_id)
            throw std::invalid_argument("nce_centroid_loss: positive id listed as negative");
    const std::size_t n = 1 + neg_ids.size();
    std::vector<const mixture::VmfComponent*> comps(n);
    comps[0] = &state.components[state.index_of(pos_id)];
    for (std::size_t j = 1; j < n; ++j)
        comps[j] = &state.components[state.index_of(neg_ids[j - 1])];
    Vec z(n);
    for (std::size_t j = 0; j < n; ++j) z[j] = comps[j]->kappa * dot(v, comps[j]->mu);
    const double lse = log_sum_exp(z);

    LossValueGrad out;
    out.value = lse - z[0];
    out.grad.assign(v.size(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double p = std::exp(z[j] - lse);
        const double coef = p - (j == 0 ? 1.0 : 0.0);
        for (std::size_t jj = 0; jj < v.size(); ++jj)
            out.grad[jj] += coef * comps[j]->kappa * comps[j]->mu[jj];
    }
    return out;
}

LossValueGrad nce_instance_loss(std::span<const double> v_pos, const Matrix& v_negs,
                                const mixture::VmfComponent& comp) {
    const std::size_t d = comp.mu.size();
    if (v_pos.size() != d)
        throw std::invalid_argument("nce_instance_loss: dimension mismatch");
    if (v_negs.rows > 0 && v_negs.cols != d)
        throw std::invalid_argument("nce_instance_loss: negative embedding dimension mismatch");
    Vec z(1 + v_negs.rows);
    z[0] = comp.kappa * dot(v_pos, comp.mu);
    for (std::size_t i = 0; i < v_negs.rows; ++i)
        z[i + 1] = comp.kappa * dot(v_negs.row_span(i), comp.mu);
    const double lse = log_sum_exp(z);

    LossValueGrad out;
    out.value = lse - z[0];
    out.grad.resize(d);
    const double p0 = std::exp(z[0] - lse);
    for (std::size_t jj = 0; jj < d; ++jj)
        out.grad[jj] = (p0 - 1.0) * comp.kappa * comp.mu[jj];
    return out;
}

}  // namespace siammm::losses
