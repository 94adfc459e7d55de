#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace siammm {

using Vec = std::vector<double>;

// Dense row-major matrix. Rows are samples, columns are coordinates.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }
    std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }
    std::span<double> row_span(std::size_t i) { return {row(i), cols}; }

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    void set_row(std::size_t i, std::span<const double> v) {
        for (std::size_t j = 0; j < cols; ++j) data[i * cols + j] = v[j];
    }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Normalizes v in place and returns the original norm. Throws on (near-)zero input.
inline double normalize_in_place(std::span<double> v, double eps = 1e-300) {
    const double n = l2_norm(v);
    if (!(n > eps)) throw std::domain_error("cannot normalize vector with near-zero norm");
    for (double& x : v) x /= n;
    return n;
}

inline Vec normalized(std::span<const double> v) {
    Vec out(v.begin(), v.end());
    normalize_in_place(out);
    return out;
}

inline Vec normalized(std::initializer_list<double> v) {
    return normalized(std::span<const double>(v.begin(), v.size()));
}

inline bool is_unit(std::span<const double> v, double tol = 1e-9) {
    return std::abs(l2_norm(v) - 1.0) <= tol;
}

inline void check_unit(std::span<const double> v, const char* what, double tol = 1e-6) {
    if (!is_unit(v, tol))
        throw std::invalid_argument(std::string(what) + ": input is not L2-normalized");
}

}  // namespace siammm
