#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "nohd/gamecore.hpp"
#include "nohd/games.hpp"
#include "test_support.hpp"

using namespace nohd;
using namespace nohd::testing;

namespace {

GameEval synthetic_eval(const Matrix& jacobian, Vec xi,
                        std::vector<std::size_t> block_dims) {
    GameEval eval;
    eval.jacobian = jacobian;
    eval.sim_grad = std::move(xi);
    eval.block_dims = std::move(block_dims);
    eval.values.assign(eval.block_dims.size(), 0.0);
    eval.full_grads = Matrix(eval.block_dims.size(), eval.sim_grad.size());
    return eval;
}

// ξ(θ) column-wise central differences as an independent check of Ĥ.
Matrix fd_jacobian(const Game& game, const ParamVector& theta, double h = 1e-5) {
    const std::size_t n = theta.dim();
    Matrix jac(n, n);
    Vec flat(theta.flat().begin(), theta.flat().end());
    for (std::size_t j = 0; j < n; ++j) {
        flat[j] = theta.flat()[j] + h;
        const Vec plus = evaluate(game, theta.with_flat(flat)).sim_grad;
        flat[j] = theta.flat()[j] - h;
        const Vec minus = evaluate(game, theta.with_flat(flat)).sim_grad;
        flat[j] = theta.flat()[j];
        for (std::size_t i = 0; i < n; ++i) jac(i, j) = (plus[i] - minus[i]) / (2.0 * h);
    }
    return jac;
}

std::vector<std::unique_ptr<Game>> closed_form_games() {
    std::vector<std::unique_ptr<Game>> games;
    games.push_back(std::make_unique<MatrixGame>(
        MatrixGame::matching_pennies(Parametrization::Boltzmann)));
    games.push_back(std::make_unique<MatrixGame>(
        MatrixGame::rock_paper_scissors(Parametrization::Boltzmann)));
    games.push_back(std::make_unique<AnalyticGame>(make_analytic(AnalyticKind::Bilinear)));
    games.push_back(std::make_unique<AnalyticGame>(
        make_analytic(AnalyticKind::QuadraticPotential)));
    games.push_back(std::make_unique<AnalyticGame>(
        make_analytic(AnalyticKind::PerturbedHamiltonian)));
    return games;
}

}  // namespace

TEST_CASE("ParamVector keeps block and flat views consistent") {
    const ParamVector theta({2, 3}, Vec{1, 2, 3, 4, 5});
    REQUIRE(theta.players() == 2);
    REQUIRE(theta.dim() == 5);
    REQUIRE(theta.block(0)[1] == 2.0);
    REQUIRE(theta.block(1)[0] == 3.0);
    REQUIRE(theta.block_offset(1) == 2);
    REQUIRE_THROWS_AS(ParamVector({2, 2}, Vec{1, 2, 3}), DimensionError);

    const ParamVector from_blocks = ParamVector::from_blocks({{1, 2}, {3, 4, 5}});
    REQUIRE(from_blocks.dim() == 5);
    REQUIRE(from_blocks.flat()[4] == 5.0);
}

TEST_CASE("evaluate on the bilinear game matches hand differentiation") {
    const AnalyticGame game = make_analytic(AnalyticKind::Bilinear);
    const GameEval eval = evaluate(game, ParamVector({1, 1}, Vec{1.0, 1.0}));
    REQUIRE(eval.values[0] == 1.0);
    REQUIRE(eval.values[1] == -1.0);
    REQUIRE(eval.sim_grad[0] == 1.0);
    REQUIRE(eval.sim_grad[1] == -1.0);
    REQUIRE(eval.jacobian(0, 0) == 0.0);
    REQUIRE(eval.jacobian(0, 1) == 1.0);
    REQUIRE(eval.jacobian(1, 0) == -1.0);
    REQUIRE(eval.jacobian(1, 1) == 0.0);
    // The gradient table carries opponent gradients too.
    REQUIRE(eval.full_grads(0, 1) == 1.0);
    REQUIRE(eval.full_grads(1, 0) == -1.0);
}

TEST_CASE("evaluate on the quadratic potential game") {
    const AnalyticGame game = make_analytic(AnalyticKind::QuadraticPotential);
    const GameEval eval = evaluate(game, ParamVector({1, 1}, Vec{1.0, 2.0}));
    REQUIRE(eval.sim_grad[0] == 1.0);
    REQUIRE(eval.sim_grad[1] == 2.0);
    REQUIRE(max_abs_diff(eval.jacobian, Matrix::identity(2)) < 1e-14);
}

TEST_CASE("the uniform point of Boltzmann Matching Pennies is stationary") {
    const MatrixGame game = MatrixGame::matching_pennies(Parametrization::Boltzmann);
    const GameEval eval = evaluate(game, ParamVector::zeros({2, 2}));
    REQUIRE(norm(eval.sim_grad) < 1e-14);
}

TEST_CASE("evaluate rejects mismatched layouts") {
    const MatrixGame game = MatrixGame::matching_pennies(Parametrization::Boltzmann);
    REQUIRE_THROWS_AS(evaluate(game, ParamVector::zeros({3, 1})), DimensionError);
}

TEST_CASE("decompose on the three hand-checked examples") {
    {
        const GameEval eval =
            synthetic_eval(Matrix{{0, 1}, {-1, 0}}, Vec{1, 0}, {1, 1});
        const Decomposition dec = decompose(eval);
        REQUIRE(dec.s.max_abs() == 0.0);
        REQUIRE(max_abs_diff(dec.a, eval.jacobian) == 0.0);
    }
    {
        const GameEval eval = synthetic_eval(Matrix::identity(2), Vec{1, 0}, {1, 1});
        const Decomposition dec = decompose(eval);
        REQUIRE(max_abs_diff(dec.s, Matrix::identity(2)) == 0.0);
        REQUIRE(dec.a.max_abs() == 0.0);
    }
    {
        const GameEval eval = synthetic_eval(Matrix{{1, 2}, {0, 1}}, Vec{1, 1}, {1, 1});
        const Decomposition dec = decompose(eval);
        REQUIRE(max_abs_diff(dec.s, Matrix{{1, 1}, {1, 1}}) == 0.0);
        REQUIRE(max_abs_diff(dec.a, Matrix{{0, 1}, {-1, 0}}) == 0.0);
    }
}

TEST_CASE("decomposition identities hold for random Jacobians") {
    std::mt19937_64 rng(9901);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 2 + static_cast<std::size_t>(uniform01(rng) * 5.0);
        const Matrix jac = random_matrix(n, n, rng);
        const Vec xi = random_vector(n, rng);
        const Decomposition dec = decompose(synthetic_eval(jac, xi, {n / 2, n - n / 2}));

        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                REQUIRE(dec.s(i, j) == dec.s(j, i));
                REQUIRE(dec.a(i, j) == -dec.a(j, i));
                REQUIRE(std::abs(dec.s(i, j) + dec.a(i, j) - jac(i, j)) <=
                        4e-16 * std::abs(jac(i, j)) + 1e-300);
            }

        REQUIRE(dec.ham_value == Catch::Approx(0.5 * dot(xi, xi)).epsilon(1e-14));
        // ∇H = Ĥᵀξ = (S + Aᵀ)ξ.
        const Vec via_split = add(dec.s.apply(xi), dec.a.apply_transposed(xi));
        REQUIRE(max_abs_diff(dec.ham_grad, via_split) < 1e-13);
    }
}

TEST_CASE("classify_fixed_point follows the eigenvalue sign pattern") {
    const auto classify = [](Matrix s) {
        Decomposition dec;
        dec.s = std::move(s);
        dec.a = Matrix(dec.s.rows(), dec.s.cols());
        dec.ham_value = 0.0;
        dec.ham_grad = Vec(dec.s.rows(), 0.0);
        return classify_fixed_point(dec, 1e-6);
    };
    REQUIRE(classify(Matrix::identity(3)).kind == FixedPointKind::SymmetricStable);
    REQUIRE(classify(Matrix::identity(2) * -1.0).kind ==
            FixedPointKind::SymmetricUnstable);
    REQUIRE(classify(Matrix::diagonal(Vec{1.0, -1.0})).kind ==
            FixedPointKind::StrictSaddle);
    REQUIRE(classify(Matrix::diagonal(Vec{1.0, 1e-9})).kind ==
            FixedPointKind::Indeterminate);
}

TEST_CASE("classify_fixed_point rejects non-stationary points") {
    Decomposition dec;
    dec.s = Matrix::identity(2);
    dec.a = Matrix(2, 2);
    dec.ham_value = 0.5;  // ‖ξ‖ = 1
    dec.ham_grad = Vec{1.0, 0.0};
    REQUIRE_THROWS_AS(classify_fixed_point(dec, 1e-6), ParameterError);
}

TEST_CASE("the Jacobian matches finite differences of the simultaneous gradient") {
    std::mt19937_64 rng(9902);
    for (const auto& game : closed_form_games()) {
        for (int rep = 0; rep < 20; ++rep) {
            const ParamVector theta(game->block_dims(),
                                    random_vector(game->dim(), rng));
            const GameEval eval = evaluate(*game, theta);
            REQUIRE(max_abs_diff(fd_jacobian(*game, theta), eval.jacobian) < 1e-5);
        }
    }
}

TEST_CASE("the Hamiltonian gradient matches finite differences of H") {
    std::mt19937_64 rng(9903);
    const double h = 1e-5;
    for (const auto& game : closed_form_games()) {
        for (int rep = 0; rep < 20; ++rep) {
            const ParamVector theta(game->block_dims(),
                                    random_vector(game->dim(), rng));
            const Decomposition dec = decompose(evaluate(*game, theta));
            Vec flat(theta.flat().begin(), theta.flat().end());
            for (std::size_t j = 0; j < theta.dim(); ++j) {
                flat[j] += h;
                const Vec xi_p = evaluate(*game, theta.with_flat(flat)).sim_grad;
                flat[j] -= 2.0 * h;
                const Vec xi_m = evaluate(*game, theta.with_flat(flat)).sim_grad;
                flat[j] = theta.flat()[j];
                const double fd =
                    (0.5 * dot(xi_p, xi_p) - 0.5 * dot(xi_m, xi_m)) / (2.0 * h);
                REQUIRE(std::abs(dec.ham_grad[j] - fd) < 1e-5);
            }
        }
    }
}

TEST_CASE("game values differentiate consistently under both derivative paths") {
    std::mt19937_64 rng(9905);
    for (const auto& game : closed_form_games()) {
        for (int rep = 0; rep < 20; ++rep) {
            const Vec x = random_vector(game->dim(), rng);
            for (std::size_t i = 0; i < game->players(); ++i) {
                const GradHess exact = grad_hess(
                    [&](std::span<const Dual2> v) { return game->value(i, v); }, x);
                const FdResult fd = fd_check(
                    [&](std::span<const double> v) { return game->value(i, v); }, x,
                    1e-4);
                const double tol = std::max(1e-5, 1e-4 * std::abs(exact.value));
                REQUIRE(max_abs_diff(exact.grad, fd.grad) < tol);
                REQUIRE(max_abs_diff(exact.hess, fd.hess) < 1e-4);
            }
        }
    }
}

TEST_CASE("the exact potential game has xi equal to the potential gradient") {
    std::mt19937_64 rng(9904);
    AnalyticParams params;
    params.dim_per_player = 2;
    Matrix p = random_symmetric(4, rng);
    for (std::size_t i = 0; i < 4; ++i) p(i, i) += 4.0;
    params.potential = p;
    const AnalyticGame game = make_analytic(AnalyticKind::QuadraticPotential, params);
    for (int rep = 0; rep < 20; ++rep) {
        const ParamVector theta({2, 2}, random_vector(4, rng));
        const GameEval eval = evaluate(game, theta);
        REQUIRE(max_abs_diff(eval.sim_grad, game.potential_gradient(theta)) < 1e-12);
        const Decomposition dec = decompose(eval);
        REQUIRE(dec.a.max_abs() < 1e-14);
    }
}
