#include "siammm/vmf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace siammm::vmf {

namespace {

// log(exp(a) + exp(b)) without overflow
double log_add(double a, double b) {
    if (a < b) std::swap(a, b);
    if (std::isinf(b) && b < 0) return a;
    return a + std::log1p(std::exp(b - a));
}

// Power series: I_nu(x) = sum_m (x/2)^(2m+nu) / (m! Gamma(m+nu+1)).
// All terms positive, so accumulate in log space.
double log_bessel_series(double nu, double x) {
    const double log_half_x = std::log(x / 2.0);
    double log_term = nu * log_half_x - std::lgamma(nu + 1.0);
    double log_sum = log_term;
    for (int m = 1; m < 20000; ++m) {
        log_term += 2.0 * log_half_x - std::log(static_cast<double>(m)) -
                    std::log(nu + static_cast<double>(m));
        log_sum = log_add(log_sum, log_term);
        if (log_term < log_sum - 46.0) break;
    }
    return log_sum;
}

// Debye polynomials u_k(p)/nu^k regrouped as series in 1/S with S = sqrt(nu^2+x^2):
// the k-th correction is a polynomial in t2 = (nu/S)^2 divided by S^k.
// Coefficients are exact rationals from the u_k recurrence.
constexpr double C1[] = {1.0 / 8, -5.0 / 24};
constexpr double C2[] = {9.0 / 128, -77.0 / 192, 385.0 / 1152};
constexpr double C3[] = {75.0 / 1024, -4563.0 / 5120, 17017.0 / 9216, -85085.0 / 82944};
constexpr double C4[] = {3675.0 / 32768, -96833.0 / 40960, 144001.0 / 16384,
                         -7436429.0 / 663552, 37182145.0 / 7962624};
constexpr double C5[] = {59535.0 / 262144,        -67608983.0 / 9175040,
                         250881631.0 / 5898240,   -108313205.0 / 1179648,
                         5391411025.0 / 63700992, -5391411025.0 / 191102976};
constexpr double C6[] = {2401245.0 / 4194304,        -388895895.0 / 14680064,
                         1441372804469.0 / 6606028800.0, -33010308331.0 / 47185920,
                         4445922195.0 / 4194304,     -1169936192425.0 / 1528823808.0,
                         5849680962125.0 / 27518828544.0};

double poly_eval(const double* c, int n, double t2) {
    double acc = c[n - 1];
    for (int i = n - 2; i >= 0; --i) acc = acc * t2 + c[i];
    return acc;
}

// Uniform asymptotic expansion for large nu and/or x. With S = hypot(nu, x),
// log I_nu(x) ~ S + nu log(x / (nu + S)) - log(2 pi S)/2 + log(1 + sum_k c_k(t2)/S^k).
double log_bessel_asymptotic(double nu, double x) {
    const double S = std::hypot(nu, x);
    const double t = nu / S;
    const double t2 = t * t;
    double base = S + nu * std::log(x / (nu + S)) - 0.5 * std::log(2.0 * std::numbers::pi) -
                  0.5 * std::log(S);
    double corr = poly_eval(C1, 2, t2) / S;
    double sk = S * S;
    corr += poly_eval(C2, 3, t2) / sk;
    sk *= S;
    corr += poly_eval(C3, 4, t2) / sk;
    sk *= S;
    corr += poly_eval(C4, 5, t2) / sk;
    sk *= S;
    corr += poly_eval(C5, 6, t2) / sk;
    sk *= S;
    corr += poly_eval(C6, 7, t2) / sk;
    return base + std::log1p(corr);
}

}  // namespace

double log_bessel_i(double nu, double x) {
    if (!(nu >= 0.0) || !(x >= 0.0) || !std::isfinite(nu) || !std::isfinite(x))
        throw std::domain_error("log_bessel_i: need finite nu >= 0, x >= 0");
    if (x == 0.0) {
        if (nu == 0.0) return 0.0;
        return -std::numeric_limits<double>::infinity();
    }
    if (x <= 20.0 * std::max(1.0, nu)) return log_bessel_series(nu, x);
    return log_bessel_asymptotic(nu, x);
}

double log_norm_const(int d, double kappa) {
    if (d < 2) throw std::domain_error("log_norm_const: dimension must be >= 2");
    if (!(kappa >= 0.0) || !std::isfinite(kappa))
        throw std::domain_error("log_norm_const: kappa must be finite and >= 0");
    const double half_d = 0.5 * static_cast<double>(d);
    if (kappa == 0.0) {
        // reciprocal of the surface area of the unit sphere in R^d
        return std::lgamma(half_d) - std::numbers::ln2 - half_d * std::log(std::numbers::pi);
    }
    return (half_d - 1.0) * std::log(kappa) - half_d * std::log(2.0 * std::numbers::pi) -
           log_bessel_i(half_d - 1.0, kappa);
}

VmfParams::VmfParams(Vec mean_direction, double concentration, const Guards& g)
    : mu(std::move(mean_direction)), kappa(concentration) {
    if (mu.size() < 2) throw std::invalid_argument("VmfParams: dimension must be >= 2");
    if (!(kappa >= 0.0) || !std::isfinite(kappa) || kappa > g.kappa_max)
        throw std::invalid_argument("VmfParams: kappa out of range");
    check_unit(mu, "VmfParams.mu");
}

double log_density(std::span<const double> v, const VmfParams& params) {
    if (v.size() != params.mu.size())
        throw std::invalid_argument("log_density: dimension mismatch");
    return log_norm_const(static_cast<int>(params.mu.size()), params.kappa) +
           params.kappa * dot(v, params.mu);
}

MeanEstimate estimate_mean(const Matrix& points, std::span<const double> weights,
                           const Guards& guards) {
    if (points.rows == 0) throw std::invalid_argument("estimate_mean: no points");
    if (weights.size() != points.rows)
        throw std::invalid_argument("estimate_mean: weight count mismatch");
    const std::size_t d = points.cols;
    Vec r(d, 0.0);
    double wsum = 0.0;
    for (std::size_t i = 0; i < points.rows; ++i) {
        const double w = weights[i];
        if (!(w >= 0.0) || !std::isfinite(w))
            throw std::invalid_argument("estimate_mean: weights must be finite and >= 0");
        const double* row = points.data.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) r[j] += w * row[j];
        wsum += w;
    }
    if (wsum <= 0.0) throw std::invalid_argument("estimate_mean: weights sum to zero");
    for (double& x : r) x /= wsum;
    const double r_norm = l2_norm(r);
    if (r_norm < guards.eps_resultant)
        throw degenerate_resultant_error("estimate_mean: resultant vector is degenerate");
    Vec mu_hat(d);
    for (std::size_t j = 0; j < d; ++j) mu_hat[j] = r[j] / r_norm;
    return {std::move(r), std::move(mu_hat), r_norm};
}

double estimate_kappa(double r_norm, int d, const Guards& guards) {
    if (d < 2) throw std::domain_error("estimate_kappa: dimension must be >= 2");
    if (!(r_norm >= 0.0) || !std::isfinite(r_norm))
        throw std::domain_error("estimate_kappa: r_norm must be finite and >= 0");
    const double rbar = std::min(r_norm, 1.0 - guards.eps_clamp);
    const double kappa = rbar * (static_cast<double>(d) - rbar * rbar) / (1.0 - rbar * rbar);
    return std::clamp(kappa, 0.0, guards.kappa_max);
}

Vec sample_unit_sphere(int d, std::mt19937_64& rng) {
    // d = 1 is allowed (gives +-1); needed for the tangent direction when
    // sampling a 2-d vMF.
    if (d < 1) throw std::domain_error("sample_unit_sphere: dimension must be >= 1");
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec v(static_cast<std::size_t>(d));
    double norm = 0.0;
    do {
        for (double& x : v) x = gauss(rng);
        norm = l2_norm(v);
    } while (norm < 1e-12);
    for (double& x : v) x /= norm;
    return v;
}

namespace {

// Wood (1994): sample the cosine w of the angle to the mean direction by
// rejection from a scaled Beta envelope.
double sample_tangent_cosine(double kappa, int d, std::mt19937_64& rng) {
    const double dm1 = static_cast<double>(d - 1);
    const double b = dm1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + dm1 * dm1));
    const double x0 = (1.0 - b) / (1.0 + b);
    const double c = kappa * x0 + dm1 * std::log(1.0 - x0 * x0);
    std::gamma_distribution<double> gamma_half(dm1 / 2.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (;;) {
        const double g1 = gamma_half(rng);
        const double g2 = gamma_half(rng);
        const double z = g1 / (g1 + g2);  // Beta((d-1)/2, (d-1)/2)
        const double w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        const double u = unif(rng);
        if (kappa * w + dm1 * std::log(1.0 - x0 * w) - c >= std::log(u)) return w;
    }
}

}  // namespace

Matrix sample_vmf(const VmfParams& params, std::size_t n, std::mt19937_64& rng) {
    const std::size_t d = params.mu.size();
    Matrix out(n, d);
    if (params.kappa == 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            Vec v = sample_unit_sphere(static_cast<int>(d), rng);
            out.set_row(i, v);
        }
        return out;
    }
    // Householder vector reflecting e1 onto mu; near-identity case handled
    // by skipping the reflection when the vector degenerates.
    Vec h(d);
    h[0] = params.mu[0] - 1.0;
    for (std::size_t j = 1; j < d; ++j) h[j] = params.mu[j];
    double h_norm = l2_norm(h);
    const bool reflect = h_norm > 1e-12;
    if (reflect)
        for (double& x : h) x /= h_norm;
    Vec v(d);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = sample_tangent_cosine(params.kappa, static_cast<int>(d), rng);
        Vec u = sample_unit_sphere(static_cast<int>(d) - 1, rng);
        const double s = std::sqrt(std::max(0.0, 1.0 - w * w));
        v[0] = w;
        for (std::size_t j = 1; j < d; ++j) v[j] = s * u[j - 1];
        if (reflect) {
            const double proj = dot(v, h);
            for (std::size_t j = 0; j < d; ++j) v[j] -= 2.0 * proj * h[j];
        }
        normalize_in_place(v);
        out.set_row(i, v);
    }
    return out;
}

}  // namespace siammm::vmf
