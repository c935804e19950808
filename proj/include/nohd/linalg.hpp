#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "nohd/errors.hpp"
#include "nohd/matrix.hpp"

namespace nohd {

/// Eigendecomposition H = Q diag(λ) Qᵀ of a symmetric matrix.
/// Eigenvalues are sorted by descending absolute value; eigenvectors are the
/// matching orthonormal columns of Q.
struct SymEig {
    Vec eigenvalues;
    Matrix eigenvectors;

    Matrix reconstruct() const {
        const std::size_t n = eigenvalues.size();
        Matrix r(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < n; ++k)
                    acc += eigenvectors(i, k) * eigenvalues[k] * eigenvectors(j, k);
                r(i, j) = acc;
            }
        return r;
    }
};

namespace detail {

inline double off_diagonal_frobenius(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

}  // namespace detail

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input is symmetrized as (H + Hᵀ)/2 before iterating, which absorbs
/// round-off asymmetry from upstream arithmetic. Sweeps run until the
/// off-diagonal Frobenius norm drops below 1e-12 relative to ‖H‖_F, with a
/// cap of 100 sweeps.
inline SymEig sym_eig(const Matrix& h) {
    if (!h.square()) throw DimensionError("sym_eig requires a square matrix");
    const std::size_t n = h.rows();
    if (h.max_abs() > 0.0) {
        double asym = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                asym = std::max(asym, std::abs(h(i, j) - h(j, i)));
        if (asym > 1e-9 * h.max_abs())
            throw DimensionError("sym_eig input is not symmetric");
    }

    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (h(i, j) + h(j, i));
    // Accumulate Qᵀ so each rotation touches two contiguous rows.
    Matrix qt = Matrix::identity(n);

    const double scale = a.frobenius_norm();
    const double threshold = 1e-12 * scale;
    if (scale > 0.0) {
        bool converged = false;
        for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
            double off_l1 = 0.0;
            for (std::size_t i = 0; i + 1 < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) off_l1 += std::abs(a(i, j));
            if (off_l1 == 0.0) break;
            // Early sweeps skip weak pairs; later sweeps zero entries that
            // can no longer move the diagonal instead of rotating them.
            const double rotate_floor =
                sweep < 3 ? 0.2 * off_l1 / static_cast<double>(n * n) : 0.0;
            for (std::size_t p = 0; p + 1 < n; ++p) {
                for (std::size_t q = p + 1; q < n; ++q) {
                    const double apq = a(p, q);
                    if (apq == 0.0) continue;
                    const double tiny = 100.0 * std::abs(apq);
                    if (sweep > 3 &&
                        std::abs(a(p, p)) + tiny == std::abs(a(p, p)) &&
                        std::abs(a(q, q)) + tiny == std::abs(a(q, q))) {
                        a(p, q) = a(q, p) = 0.0;
                        continue;
                    }
                    if (std::abs(apq) <= rotate_floor) continue;
                    const double app = a(p, p);
                    const double aqq = a(q, q);
                    const double theta = 0.5 * (aqq - app) / apq;
                    // Stable root of t² + 2θt − 1 = 0 with |t| ≤ 1.
                    const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                     (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                    const double c = 1.0 / std::sqrt(t * t + 1.0);
                    const double s = t * c;

                    // Row rotation covers the column rotation by symmetry:
                    // rotate rows p and q in place, mirroring onto the
                    // columns as we go, then patch the pivot block.
                    double* base = a.data().data();
                    double* rp = base + p * n;
                    double* rq = base + q * n;
                    for (std::size_t k = 0; k < n; ++k) {
                        const double akp = rp[k];
                        const double akq = rq[k];
                        const double np = c * akp - s * akq;
                        const double nq = s * akp + c * akq;
                        rp[k] = np;
                        rq[k] = nq;
                        base[k * n + p] = np;
                        base[k * n + q] = nq;
                    }
                    rp[p] = a(p, p) = app - t * apq;
                    rq[q] = a(q, q) = aqq + t * apq;
                    rp[q] = rq[p] = 0.0;

                    double* vp = qt.row(p).data();
                    double* vq = qt.row(q).data();
                    for (std::size_t k = 0; k < n; ++k) {
                        const double qkp = vp[k];
                        const double qkq = vq[k];
                        vp[k] = c * qkp - s * qkq;
                        vq[k] = s * qkp + c * qkq;
                    }
                }
            }
            converged = detail::off_diagonal_frobenius(a) <= threshold;
        }
        if (!converged && detail::off_diagonal_frobenius(a) > threshold)
            throw NumericalError("sym_eig: Jacobi sweeps did not converge");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return std::abs(a(i, i)) > std::abs(a(j, j));
    });

    SymEig out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.eigenvalues[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, k) = qt(order[k], i);
    }
    return out;
}

/// PT-inverse: eigendecompose, replace each eigenvalue λ by 1/max(|λ|, m),
/// and reassemble. The result is symmetric positive definite with spectrum
/// in (0, 1/m].
inline Matrix pt_inverse(const Matrix& h, double m) {
    if (!(m > 0.0)) throw ParameterError("pt_inverse floor m must be positive");
    SymEig eig = sym_eig(h);
    const std::size_t n = eig.eigenvalues.size();
    Vec inv(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double mag = std::abs(eig.eigenvalues[k]);
        inv[k] = 1.0 / (mag >= m ? mag : m);
    }
    Matrix r(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                acc += eig.eigenvectors(i, k) * inv[k] * eig.eigenvectors(j, k);
            r(i, j) = acc;
            r(j, i) = acc;
        }
    return r;
}

/// Linear solve by LU with partial pivoting. Returns nullopt when a pivot
/// falls below 1e-12 · max|A| so callers can fall back to pseudo_solve.
inline std::optional<Vec> solve(const Matrix& a, std::span<const double> b) {
    if (!a.square()) throw DimensionError("solve requires a square matrix");
    const std::size_t n = a.rows();
    if (b.size() != n) throw DimensionError("solve right-hand side length mismatch");

    Matrix lu = a;
    Vec x(b.begin(), b.end());
    const double pivot_floor = 1e-12 * a.max_abs();

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::abs(lu(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::abs(lu(r, col));
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (best <= pivot_floor) return std::nullopt;
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(col, j), lu(pivot, j));
            std::swap(x[col], x[pivot]);
        }
        const double d = lu(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = lu(r, col) / d;
            if (f == 0.0) continue;
            lu(r, col) = f;
            for (std::size_t j = col + 1; j < n; ++j) lu(r, j) -= f * lu(col, j);
            x[r] -= f * x[col];
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        double acc = x[i];
        for (std::size_t j = i + 1; j < n; ++j) acc -= lu(i, j) * x[j];
        x[i] = acc / lu(i, i);
    }
    return x;
}

/// Thin singular value decomposition A = U diag(σ) Vᵀ with σ sorted
/// descending.
struct Svd {
    Matrix u;  // rows(A) × min(m,n)
    Vec sigma;
    Matrix v;  // cols(A) × min(m,n)
};

namespace detail {

// One-sided Jacobi on a tall matrix (rows ≥ cols): rotate column pairs until
// mutually orthogonal, then read singular values off the column norms.
// Computes small singular values far more reliably than eigendecomposing
// AᵀA, which is what makes a tight zero threshold usable downstream.
inline Svd svd_tall(Matrix b) {
    const std::size_t m = b.rows();
    const std::size_t n = b.cols();
    Matrix v = Matrix::identity(n);

    bool rotated = true;
    for (int sweep = 0; sweep < 60 && rotated; ++sweep) {
        rotated = false;
        // Columns that are pure round-off at matrix scale are deflated:
        // rotating them only reshuffles noise and can cycle forever.
        double max_col_sq = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += b(i, j) * b(i, j);
            max_col_sq = std::max(max_col_sq, s);
        }
        const double negligible_sq = 1e-30 * max_col_sq;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += b(i, p) * b(i, p);
                    beta += b(i, q) * b(i, q);
                    gamma += b(i, p) * b(i, q);
                }
                // sqrt(α)·sqrt(β) instead of sqrt(α·β): the product can
                // underflow for tiny columns.
                if (alpha <= negligible_sq || beta <= negligible_sq ||
                    std::abs(gamma) <= 1e-15 * std::sqrt(alpha) * std::sqrt(beta))
                    continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(zeta * zeta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double bp = b(i, p);
                    const double bq = b(i, q);
                    b(i, p) = c * bp - s * bq;
                    b(i, q) = s * bp + c * bq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p);
                    const double vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
    }
    if (rotated) throw NumericalError("svd: Jacobi sweeps did not converge");

    Vec sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += b(i, j) * b(i, j);
        sigma[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

    Svd out;
    out.sigma.resize(n);
    out.u = Matrix(m, n);
    out.v = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.sigma[k] = sigma[j];
        const double inv = sigma[j] > 0.0 ? 1.0 / sigma[j] : 0.0;
        for (std::size_t i = 0; i < m; ++i) out.u(i, k) = b(i, j) * inv;
        for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
    }
    return out;
}

}  // namespace detail

inline Svd svd(const Matrix& a) {
    // Normalize the scale so inputs deep in the denormal range behave.
    const double scale = a.max_abs();
    Matrix work = a;
    if (scale > 0.0 && (scale < 1e-150 || scale > 1e150)) work *= 1.0 / scale;
    Svd dec = work.rows() >= work.cols() ? detail::svd_tall(std::move(work)) : [&] {
        Svd t = detail::svd_tall(work.transpose());
        return Svd{std::move(t.v), std::move(t.sigma), std::move(t.u)};
    }();
    if (scale > 0.0 && (scale < 1e-150 || scale > 1e150))
        for (double& s : dec.sigma) s *= scale;
    return dec;
}

/// Minimum-norm least-squares solution of A x ≈ b via the Moore-Penrose
/// pseudoinverse. Singular values below 1e-10 · σ_max are treated as zero.
/// Total over finite inputs: a zero matrix yields the zero vector.
inline Vec pseudo_solve(const Matrix& a, std::span<const double> b) {
    if (b.size() != a.rows()) throw DimensionError("pseudo_solve rhs length mismatch");
    const Svd dec = svd(a);
    const double sigma_max = dec.sigma.empty() ? 0.0 : dec.sigma.front();
    const double cutoff = 1e-10 * sigma_max;
    Vec x(a.cols(), 0.0);
    for (std::size_t k = 0; k < dec.sigma.size(); ++k) {
        if (dec.sigma[k] <= cutoff || dec.sigma[k] == 0.0) continue;
        double proj = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) proj += dec.u(i, k) * b[i];
        const double coef = proj / dec.sigma[k];
        for (std::size_t j = 0; j < a.cols(); ++j) x[j] += coef * dec.v(j, k);
    }
    return x;
}

}  // namespace nohd
