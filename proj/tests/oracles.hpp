#pragma once

// Independent reference implementations used only by tests. These are written
// from first principles (simpler, slower algorithms) so they do not share code
// paths with the library under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "siammm/matrix.hpp"

namespace oracles {

// I_0(x) from its power series, 30 terms, direct (non-log) arithmetic.
inline double bessel_i0_series(double x) {
    double sum = 0.0;
    double term = 1.0;
    for (int m = 0; m < 30; ++m) {
        if (m > 0) {
            const double f = x / (2.0 * m);
            term *= f * f;
        }
        sum += term;
    }
    return sum;
}

// log c_3(kappa) = log(kappa / (4 pi sinh kappa)), valid for kappa up to ~700.
inline double log_c3_closed_form(double kappa) {
    return std::log(kappa / (4.0 * M_PI * std::sinh(kappa)));
}

// Trapezoid rule over the circle [0, 2pi) with n equally spaced points.
// Periodic integrand, so plain average times the period.
inline double trapezoid_circle(const std::function<double(double)>& f, int n) {
    const double two_pi = 2.0 * M_PI;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += f(two_pi * i / n);
    return acc * two_pi / n;
}

// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x,
                           double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Cyclic Jacobi eigensolver for small dense symmetric matrices. Returns
// eigenvalues sorted descending; eigenvectors are the matching columns of V.
struct EigenResult {
    std::vector<double> values;
    siammm::Matrix vectors;  // column j pairs with values[j]
};

inline EigenResult jacobi_eigen(const siammm::Matrix& m_in) {
    if (m_in.rows != m_in.cols) throw std::invalid_argument("jacobi_eigen: not square");
    const std::size_t n = m_in.rows;
    siammm::Matrix a = m_in;
    siammm::Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v.at(k, p), vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - s * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = a.at(i, i);
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return diag[x] > diag[y]; });
    EigenResult out;
    out.values.resize(n);
    out.vectors = siammm::Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = diag[order[j]];
        for (std::size_t i = 0; i < n; ++i) out.vectors.at(i, j) = v.at(i, order[j]);
    }
    return out;
}

// Mutual information between two labelings, natural log.
inline double mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size();
    const int ka = 1 + *std::max_element(a.begin(), a.end());
    const int kb = 1 + *std::max_element(b.begin(), b.end());
    std::vector<double> na(ka, 0.0), nb(kb, 0.0);
    std::vector<double> nab(static_cast<std::size_t>(ka) * kb, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        na[a[i]] += 1.0;
        nb[b[i]] += 1.0;
        nab[static_cast<std::size_t>(a[i]) * kb + b[i]] += 1.0;
    }
    double mi = 0.0;
    for (int i = 0; i < ka; ++i)
        for (int j = 0; j < kb; ++j) {
            const double nij = nab[static_cast<std::size_t>(i) * kb + j];
            if (nij > 0.0) mi += (nij / n) * std::log(n * nij / (na[i] * nb[j]));
        }
    return mi;
}

// Expected MI under the permutation null model, by exhaustive enumeration of
// all n! relabelings of one side. Only feasible for n <= 8.
inline double expected_mi_exhaustive(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size();
    if (n > 8) throw std::invalid_argument("expected_mi_exhaustive: n too large");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double acc = 0.0;
    std::size_t count = 0;
    std::vector<int> b_perm(n);
    do {
        for (std::size_t i = 0; i < n; ++i) b_perm[i] = b[perm[i]];
        acc += mutual_information(a, b_perm);
        ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return acc / count;
}

}  // namespace oracles
