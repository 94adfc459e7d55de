#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "siammm/matrix.hpp"
#include "siammm/mixture.hpp"

namespace siammm::losses {

struct SoftAssignment {
    std::vector<std::uint32_t> ids;  // membership set, nearest first
    Vec weights;                     // pi_k, sums to 1
    double tau = 0.0;
    std::size_t h = 0;
};

struct LossValueGrad {
    double value = 0.0;
    Vec grad;  // with respect to the online embedding fed in
};

struct ClusterLossOptions {
    bool detach_weights = false;   // freeze pi(v) when differentiating
    bool project_tangent = false;  // return the tangent-space gradient at v
    bool use_alpha = false;        // weight the pi logits by component alpha
};

// pi over the h nearest centroids: softmax of mu_k'v / tau (optionally plus
// log alpha_k), computed in log space. h = 1 returns weight exactly 1.
SoftAssignment soft_assign_weights(std::span<const double> v,
                                   const mixture::MixtureState& state, std::size_t h,
                                   double tau, bool use_alpha = false);

// -log sum_k pi_k(v) exp(kappa_k mu_k'v) over the h nearest centroids, with
// the exact gradient in v. mu, kappa, alpha and the membership set are
// constants; pi_k(v) is differentiated unless detach_weights is set.
LossValueGrad cluster_loss(std::span<const double> v, const mixture::MixtureState& state,
                           std::size_t h, double tau, const ClusterLossOptions& opts = {});

// Same loss on a caller-fixed membership set. Wanted whenever the set must
// not jump between evaluations (finite-difference probes, ablation replays).
LossValueGrad cluster_loss_with_ids(std::span<const double> v,
                                    const mixture::MixtureState& state,
                                    std::span<const std::uint32_t> ids, double tau,
                                    const ClusterLossOptions& opts = {});

struct InstanceLossResult {
    double value = 0.0;
    Vec grad_v1;
    Vec grad_v2;
    // momentum-branch inputs get no gradient slots at all
};

// Symmetrized negative cosine against the stopped momentum embeddings:
// -v1'v2m - v2'v1m. Inputs must be unit.
InstanceLossResult instance_loss(std::span<const double> v1, std::span<const double> v2,
                                 std::span<const double> v1m, std::span<const double> v2m);

// Term-wise sum of two loss terms of matching gradient shape.
LossValueGrad total_loss(const LossValueGrad& a, const LossValueGrad& b);

// Softmax cross-entropy of v against its positive centroid with the listed
// negative centroids, logits kappa_k mu_k'v.
LossValueGrad nce_centroid_loss(std::span<const double> v, std::uint32_t pos_id,
                                std::span<const std::uint32_t> neg_ids,
                                const mixture::MixtureState& state);

// Softmax cross-entropy of the positive embedding against negative
// embeddings under one component's density logits; only v_pos gets a grad.
LossValueGrad nce_instance_loss(std::span<const double> v_pos, const Matrix& v_negs,
                                const mixture::VmfComponent& comp);

}  // namespace siammm::losses
