#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "nohd/linalg.hpp"
#include "test_support.hpp"

using namespace nohd;
using namespace nohd::testing;

TEST_CASE("sym_eig of a diagonal matrix is the diagonal") {
    const Matrix h{{3, 0}, {0, 1}};
    const SymEig eig = sym_eig(h);
    REQUIRE(eig.eigenvalues[0] == Catch::Approx(3.0).margin(1e-14));
    REQUIRE(eig.eigenvalues[1] == Catch::Approx(1.0).margin(1e-14));
    REQUIRE(std::abs(eig.eigenvectors(0, 0)) == Catch::Approx(1.0).margin(1e-14));
    REQUIRE(std::abs(eig.eigenvectors(1, 1)) == Catch::Approx(1.0).margin(1e-14));
    REQUIRE(std::abs(eig.eigenvectors(1, 0)) < 1e-14);
}

TEST_CASE("sym_eig of the swap matrix finds the symmetry-forced pair") {
    const Matrix h{{0, 1}, {1, 0}};
    const SymEig eig = sym_eig(h);
    // Eigenvalues ±1, eigenvectors (1, ±1)/√2.
    REQUIRE(std::abs(eig.eigenvalues[0]) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(std::abs(eig.eigenvalues[1]) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(eig.eigenvalues[0] * eig.eigenvalues[1] == Catch::Approx(-1.0).margin(1e-12));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (std::size_t k = 0; k < 2; ++k) {
        REQUIRE(std::abs(eig.eigenvectors(0, k)) == Catch::Approx(inv_sqrt2).margin(1e-12));
        REQUIRE(std::abs(eig.eigenvectors(1, k)) == Catch::Approx(inv_sqrt2).margin(1e-12));
    }
}

TEST_CASE("sym_eig reconstruction and orthonormality on random input") {
    std::mt19937_64 rng(7001);
    for (int rep = 0; rep < 50; ++rep) {
        const Matrix h = random_symmetric(6, rng);
        const SymEig eig = sym_eig(h);
        const double scale = h.frobenius_norm();
        REQUIRE(max_abs_diff(eig.reconstruct(), h) <= 1e-10 * scale);

        const Matrix qtq = eig.eigenvectors.transpose() * eig.eigenvectors;
        REQUIRE(max_abs_diff(qtq, Matrix::identity(6)) <= 1e-10);

        for (std::size_t k = 0; k + 1 < eig.eigenvalues.size(); ++k)
            REQUIRE(std::abs(eig.eigenvalues[k]) >= std::abs(eig.eigenvalues[k + 1]));
    }
}

TEST_CASE("sym_eig rejects bad input") {
    REQUIRE_THROWS_AS(sym_eig(Matrix(2, 3)), DimensionError);
    Matrix asym{{1, 2}, {0.5, 1}};
    REQUIRE_THROWS_AS(sym_eig(asym), DimensionError);
}

TEST_CASE("pt_inverse on a diagonal matrix flips and floors") {
    const Matrix h = Matrix::diagonal(Vec{2.0, -0.5, 0.01});
    const Matrix p = pt_inverse(h, 0.03);
    REQUIRE(p(0, 0) == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(p(1, 1) == Catch::Approx(2.0).margin(1e-12));
    REQUIRE(p(2, 2) == Catch::Approx(1.0 / 0.03).margin(1e-9));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (i != j) REQUIRE(std::abs(p(i, j)) < 1e-12);
}

TEST_CASE("pt_inverse of the identity is the identity for m <= 1") {
    const Matrix p = pt_inverse(Matrix::identity(4), 0.5);
    REQUIRE(max_abs_diff(p, Matrix::identity(4)) < 1e-12);
}

TEST_CASE("pt_inverse rejects a non-positive floor") {
    REQUIRE_THROWS_AS(pt_inverse(Matrix::identity(2), 0.0), ParameterError);
    REQUIRE_THROWS_AS(pt_inverse(Matrix::identity(2), -1.0), ParameterError);
}

TEST_CASE("pt_inverse spectrum lies in (0, 1/m] for 1000 random matrices") {
    std::mt19937_64 rng(7002);
    const double m = 0.03;
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 2 + static_cast<std::size_t>(uniform01(rng) * 6.0);
        const Matrix h = random_symmetric(n, rng);
        const Matrix p = pt_inverse(h, m);

        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) REQUIRE(p(i, j) == p(j, i));

        // Positive definiteness via Cholesky and the spectral ceiling via
        // power iteration; both independent of the Jacobi path under test.
        REQUIRE(cholesky_positive_definite(p));
        REQUIRE(power_iteration_max_abs_eigenvalue(p, rng) <= 1.0 / m + 1e-6);

        const SymEig eig = sym_eig(p);
        for (double lambda : eig.eigenvalues) {
            REQUIRE(lambda > 0.0);
            REQUIRE(lambda <= 1.0 / m + 1e-9);
        }
    }
}

TEST_CASE("pt_inverse times its input squares to the identity off the floor") {
    // With every |eigenvalue| >= m the PT-inverse only flips signs, so
    // (P H)² = I regardless of the basis.
    std::mt19937_64 rng(7003);
    const double m = 0.03;
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 2 + static_cast<std::size_t>(uniform01(rng) * 4.0);
        const Matrix basis = sym_eig(random_symmetric(n, rng)).eigenvectors;
        Vec d(n);
        for (double& v : d) {
            const double mag = m + (3.0 - m) * uniform01(rng);
            v = uniform01(rng) < 0.5 ? -mag : mag;
        }
        const Matrix h = basis * Matrix::diagonal(d) * basis.transpose();
        const Matrix ph = pt_inverse(h, m) * h;
        REQUIRE(max_abs_diff(ph * ph, Matrix::identity(n)) < 1e-8);
    }
}

TEST_CASE("solve handles the trivial and antisymmetric 2x2 examples") {
    const Vec b{1.0, 0.0};
    const auto x_id = solve(Matrix::identity(2), b);
    REQUIRE(x_id);
    REQUIRE((*x_id)[0] == 1.0);
    REQUIRE((*x_id)[1] == 0.0);

    const Matrix a{{0, 1}, {-1, 0}};
    const auto x = solve(a, b);
    REQUIRE(x);
    REQUIRE((*x)[0] == Catch::Approx(0.0).margin(1e-15));
    REQUIRE((*x)[1] == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("solve meets the residual bound on well-conditioned systems") {
    std::mt19937_64 rng(7004);
    for (int rep = 0; rep < 100; ++rep) {
        Matrix a = random_matrix(8, 8, rng);
        for (std::size_t i = 0; i < 8; ++i) a(i, i) += 8.0;  // diagonally dominant
        const Vec b = random_vector(8, rng);
        const auto x = solve(a, b);
        REQUIRE(x);
        const Vec r = sub(a.apply(*x), b);
        REQUIRE(norm(r) <= 1e-8 * (a.frobenius_norm() * norm(*x) + norm(b)));
    }
}

TEST_CASE("solve signals singular systems") {
    const Matrix rank1{{1, 2}, {2, 4}};
    REQUIRE_FALSE(solve(rank1, Vec{1.0, 1.0}));
    REQUIRE_FALSE(solve(Matrix(3, 3), Vec{1.0, 1.0, 1.0}));
    REQUIRE_THROWS_AS(solve(Matrix(2, 3), Vec{1.0, 1.0}), DimensionError);
}

TEST_CASE("svd reconstructs and is orthogonal") {
    std::mt19937_64 rng(7005);
    for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{5, 3},
                              {3, 5},
                              {4, 4}}) {
        const Matrix a = random_matrix(rows, cols, rng);
        const Svd dec = svd(a);
        const std::size_t r = std::min(rows, cols);

        Matrix rec(rows, cols);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < r; ++k)
                    acc += dec.u(i, k) * dec.sigma[k] * dec.v(j, k);
                rec(i, j) = acc;
            }
        REQUIRE(max_abs_diff(rec, a) < 1e-12);
        REQUIRE(max_abs_diff(dec.u.transpose() * dec.u, Matrix::identity(r)) < 1e-12);
        REQUIRE(max_abs_diff(dec.v.transpose() * dec.v, Matrix::identity(r)) < 1e-12);
        for (std::size_t k = 0; k + 1 < r; ++k)
            REQUIRE(dec.sigma[k] >= dec.sigma[k + 1]);
    }
}

TEST_CASE("pseudo_solve of the zero matrix is the zero vector") {
    const Vec x = pseudo_solve(Matrix(3, 3), Vec{1.0, -2.0, 3.0});
    for (double v : x) REQUIRE(v == 0.0);
}

TEST_CASE("pseudo_solve agrees with solve on invertible systems") {
    std::mt19937_64 rng(7006);
    for (int rep = 0; rep < 50; ++rep) {
        Matrix a = random_matrix(5, 5, rng);
        for (std::size_t i = 0; i < 5; ++i) a(i, i) += 5.0;
        const Vec b = random_vector(5, rng);
        const auto exact = solve(a, b);
        REQUIRE(exact);
        const Vec approx = pseudo_solve(a, b);
        REQUIRE(max_abs_diff(approx, *exact) <= 1e-8 * (1.0 + norm(*exact)));
    }
}

TEST_CASE("pseudo_solve returns the minimum-norm member of the solution family") {
    // Rank-1 system: least-squares solutions form a line; sweep it and check
    // every member has equal residual and no smaller norm.
    std::mt19937_64 rng(7007);
    for (int rep = 0; rep < 20; ++rep) {
        Vec u{uniform_pm1(rng), uniform_pm1(rng)};
        Vec v{uniform_pm1(rng), uniform_pm1(rng)};
        if (norm(u) < 0.1 || norm(v) < 0.1) continue;
        Matrix a(2, 2);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) a(i, j) = u[i] * v[j];
        const Vec b = random_vector(2, rng);
        const Vec x = pseudo_solve(a, b);

        const Vec null_dir{-v[1] / norm(v), v[0] / norm(v)};  // ⊥ row space
        const double base_residual = norm(sub(a.apply(x), b));
        const double base_norm = norm(x);
        for (double t = -2.0; t <= 2.0; t += 1e-3) {
            const Vec member = add(x, scaled(null_dir, t));
            REQUIRE(norm(sub(a.apply(member), b)) <= base_residual + 1e-10);
            REQUIRE(base_norm <= norm(member) + 1e-10);
        }
        REQUIRE(std::abs(dot(x, null_dir)) < 1e-10);
    }
}
