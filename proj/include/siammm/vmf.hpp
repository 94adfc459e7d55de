#pragma once

#include <random>
#include <span>
#include <stdexcept>

#include "siammm/matrix.hpp"

namespace siammm::vmf {

// Numeric guards for the concentration estimator. The MLE formula diverges
// as the resultant length approaches 1, and kappa itself is unbounded, so
// both ends are clamped. Exposed in the run config.
struct Guards {
    double kappa_max = 1e5;
    double eps_clamp = 1e-6;      // resultant length is capped at 1 - eps_clamp
    double eps_resultant = 1e-12; // below this the mean direction is undefined
};

// Thrown by estimate_mean when the weighted resultant is (numerically) zero,
// e.g. perfectly antipodal input. Callers decide the fallback.
struct degenerate_resultant_error : std::domain_error {
    using std::domain_error::domain_error;
};

// log I_nu(x) for nu >= 0, x >= 0. Power series in log space for
// x <= 20*max(1,nu), uniform large-order asymptotic expansion beyond.
double log_bessel_i(double nu, double x);

// log c_d(kappa) = (d/2-1) log kappa - (d/2) log(2 pi) - log I_{d/2-1}(kappa).
// kappa = 0 returns the uniform limit -log(surface area of S^{d-1}).
double log_norm_const(int d, double kappa);

struct VmfParams {
    Vec mu;        // unit mean direction
    double kappa;  // concentration, >= 0

    VmfParams(Vec mean_direction, double concentration, const Guards& g = {});
};

// log f(v | mu, kappa) = log c_d(kappa) + kappa * mu.v for unit v.
double log_density(std::span<const double> v, const VmfParams& params);

struct MeanEstimate {
    Vec r;         // weighted mean vector, norm in [0,1]
    Vec mu_hat;    // r / ||r||
    double r_norm; // ||r||, reused by the kappa estimator
};

// r = sum_i w_i v_i / sum_i w_i over unit rows of `points`.
// Throws degenerate_resultant_error when ||r|| < guards.eps_resultant.
MeanEstimate estimate_mean(const Matrix& points, std::span<const double> weights,
                           const Guards& guards = {});

// Banerjee et al. approximation: kappa = (rbar d - rbar^3) / (1 - rbar^2)
// with rbar clamped to [0, 1 - eps_clamp]; result clamped to [0, kappa_max].
double estimate_kappa(double r_norm, int d, const Guards& guards = {});

// One point uniform on S^{d-1}.
Vec sample_unit_sphere(int d, std::mt19937_64& rng);

// n i.i.d. draws (rows) via Wood's rejection sampler for the tangent cosine
// plus a Householder reflection onto mu.
Matrix sample_vmf(const VmfParams& params, std::size_t n, std::mt19937_64& rng);

}  // namespace siammm::vmf
