#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "nohd/matrix.hpp"
#include "nohd/rng.hpp"

namespace nohd::testing {

inline double uniform_pm1(std::mt19937_64& rng) { return 2.0 * uniform01(rng) - 1.0; }

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = uniform_pm1(rng);
    return m;
}

inline Matrix random_symmetric(std::size_t n, std::mt19937_64& rng) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double v = uniform_pm1(rng);
            m(i, j) = v;
            m(j, i) = v;
        }
    return m;
}

inline Matrix random_antisymmetric(std::size_t n, std::mt19937_64& rng) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = uniform_pm1(rng);
            m(i, j) = v;
            m(j, i) = -v;
        }
    return m;
}

inline Vec random_vector(std::size_t n, std::mt19937_64& rng) {
    Vec v(n);
    for (double& x : v) x = uniform_pm1(rng);
    return v;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            m = std::max(m, std::abs(a(i, j) - b(i, j)));
    return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Cholesky factorization attempt: succeeds only for positive definite input.
/// Independent of the Jacobi eigendecomposition path.
inline bool cholesky_positive_definite(const Matrix& a) {
    const std::size_t n = a.rows();
    Matrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = a(i, j);
            for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
            if (i == j) {
                if (!(acc > 0.0)) return false;
                l(i, i) = std::sqrt(acc);
            } else {
                l(i, j) = acc / l(j, j);
            }
        }
    }
    return true;
}

/// Dominant eigenvalue magnitude of a symmetric matrix by power iteration.
inline double power_iteration_max_abs_eigenvalue(const Matrix& a, std::mt19937_64& rng,
                                                 int iters = 300) {
    Vec v = random_vector(a.rows(), rng);
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        Vec w = a.apply(v);
        const double n = norm(w);
        if (n == 0.0) return 0.0;
        for (double& x : w) x /= n;
        lambda = dot(w, a.apply(w));
        v = std::move(w);
    }
    return std::abs(lambda);
}

}  // namespace nohd::testing
