#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "nohd/dual.hpp"
#include "nohd/errors.hpp"
#include "nohd/linalg.hpp"
#include "nohd/matrix.hpp"

namespace nohd {

/// Joint parameter vector θ = (θ_1ᵀ, …, θ_nᵀ)ᵀ with fixed per-player block
/// boundaries. The flat view and the block views address the same storage.
class ParamVector {
  public:
    ParamVector() = default;

    ParamVector(std::vector<std::size_t> block_dims, Vec flat)
        : dims_(std::move(block_dims)), flat_(std::move(flat)) {
        rebuild_offsets();
        if (flat_.size() != offsets_.back())
            throw DimensionError("ParamVector flat length does not match block dims");
    }

    static ParamVector zeros(std::vector<std::size_t> block_dims) {
        std::size_t total = std::accumulate(block_dims.begin(), block_dims.end(),
                                            std::size_t{0});
        return ParamVector(std::move(block_dims), Vec(total, 0.0));
    }

    static ParamVector from_blocks(const std::vector<Vec>& blocks) {
        std::vector<std::size_t> dims;
        Vec flat;
        for (const Vec& b : blocks) {
            dims.push_back(b.size());
            flat.insert(flat.end(), b.begin(), b.end());
        }
        return ParamVector(std::move(dims), std::move(flat));
    }

    std::size_t players() const { return dims_.size(); }
    std::size_t dim() const { return flat_.size(); }
    std::size_t block_dim(std::size_t i) const { return dims_[i]; }
    std::size_t block_offset(std::size_t i) const { return offsets_[i]; }
    const std::vector<std::size_t>& block_dims() const { return dims_; }

    std::span<const double> flat() const { return flat_; }
    std::span<double> flat() { return flat_; }
    std::span<const double> block(std::size_t i) const {
        return std::span<const double>(flat_).subspan(offsets_[i], dims_[i]);
    }
    std::span<double> block(std::size_t i) {
        return std::span<double>(flat_).subspan(offsets_[i], dims_[i]);
    }

    ParamVector with_flat(Vec flat) const { return ParamVector(dims_, std::move(flat)); }

  private:
    void rebuild_offsets() {
        offsets_.assign(1, 0);
        for (std::size_t d : dims_) offsets_.push_back(offsets_.back() + d);
    }

    std::vector<std::size_t> dims_;
    Vec flat_;
    std::vector<std::size_t> offsets_;  // dims_.size() + 1 entries
};

/// A differentiable game: per-player scalar costs over the joint parameters,
/// evaluable both on plain doubles and on Dual2 numbers.
class Game {
  public:
    virtual ~Game() = default;
    virtual std::size_t players() const = 0;
    virtual std::vector<std::size_t> block_dims() const = 0;
    virtual double value(std::size_t player, std::span<const double> theta) const = 0;
    virtual Dual2 value(std::size_t player, std::span<const Dual2> theta) const = 0;

    std::size_t dim() const {
        const auto dims = block_dims();
        return std::accumulate(dims.begin(), dims.end(), std::size_t{0});
    }
};

/// Everything first- and second-order about a game at one point: values V_i,
/// the full gradient table G (row i = ∇_θ V_i), the simultaneous gradient ξ
/// (own-block extraction of G) and the game Jacobian ∇_θ ξ.
struct GameEval {
    Vec values;         // n
    Matrix full_grads;  // n × Σd
    Vec sim_grad;       // Σd
    Matrix jacobian;    // Σd × Σd
    std::vector<std::size_t> block_dims;
    // Standard error of ‖ξ‖ when ξ is a Monte-Carlo estimate; zero for
    // exact evaluations.
    double sim_grad_se = 0.0;
};

/// Helmholtz split of the Jacobian into symmetric (potential) and
/// antisymmetric (Hamiltonian) parts, plus the Hamiltonian H = ½‖ξ‖² and its
/// gradient ∇H = Ĥᵀξ.
struct Decomposition {
    Matrix s;
    Matrix a;
    double ham_value = 0.0;
    Vec ham_grad;

    double xi_norm() const { return std::sqrt(2.0 * ham_value); }
};

enum class FixedPointKind {
    SymmetricStable,
    SymmetricUnstable,
    StrictSaddle,
    Indeterminate,
};

inline const char* to_string(FixedPointKind k) {
    switch (k) {
        case FixedPointKind::SymmetricStable: return "symmetric-stable";
        case FixedPointKind::SymmetricUnstable: return "symmetric-unstable";
        case FixedPointKind::StrictSaddle: return "strict-saddle";
        case FixedPointKind::Indeterminate: return "indeterminate";
    }
    return "unknown";
}

struct FixedPointClass {
    FixedPointKind kind = FixedPointKind::Indeterminate;
    Vec s_eigenvalues;
};

/// Exact evaluation of values, gradient table, ξ and Ĥ at θ. Row-block i of
/// the Jacobian is the block-row i of player i's full Hessian, i.e. the
/// derivative of ∇_{θ_i} V_i with respect to every parameter.
inline GameEval evaluate(const Game& game, const ParamVector& theta) {
    const auto dims = game.block_dims();
    if (dims != theta.block_dims())
        throw DimensionError("parameter layout does not match the game");
    const std::size_t n = game.players();
    const std::size_t total = theta.dim();

    GameEval out;
    out.values.resize(n);
    out.full_grads = Matrix(n, total);
    out.sim_grad.resize(total);
    out.jacobian = Matrix(total, total);
    out.block_dims = dims;

    for (std::size_t i = 0; i < n; ++i) {
        const GradHess gh = grad_hess(
            [&](std::span<const Dual2> x) { return game.value(i, x); }, theta.flat());
        out.values[i] = gh.value;
        for (std::size_t j = 0; j < total; ++j) out.full_grads(i, j) = gh.grad[j];
        const std::size_t off = theta.block_offset(i);
        const std::size_t d = theta.block_dim(i);
        for (std::size_t r = 0; r < d; ++r) {
            out.sim_grad[off + r] = gh.grad[off + r];
            for (std::size_t c = 0; c < total; ++c)
                out.jacobian(off + r, c) = gh.hess(off + r, c);
        }
    }
    return out;
}

/// Ĥ = S + A with S = (Ĥ + Ĥᵀ)/2 and A = (Ĥ − Ĥᵀ)/2.
inline Decomposition decompose(const GameEval& eval) {
    if (!eval.jacobian.square()) throw DimensionError("decompose requires a square Jacobian");
    const std::size_t n = eval.jacobian.rows();
    Decomposition dec;
    dec.s = Matrix(n, n);
    dec.a = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double hij = eval.jacobian(i, j);
            const double hji = eval.jacobian(j, i);
            dec.s(i, j) = 0.5 * (hij + hji);
            dec.a(i, j) = 0.5 * (hij - hji);
        }
    dec.ham_value = 0.5 * dot(eval.sim_grad, eval.sim_grad);
    dec.ham_grad = eval.jacobian.apply_transposed(eval.sim_grad);
    return dec;
}

/// Classification of a fixed point from the eigenvalues of S. Eigenvalues
/// within ±tol of zero make the verdict indeterminate rather than guessed.
inline FixedPointClass classify_fixed_point(const Decomposition& dec, double tol = 1e-6) {
    if (dec.xi_norm() > tol)
        throw ParameterError("classify_fixed_point called away from a fixed point");
    SymEig eig = sym_eig(dec.s);
    double min_eig = eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues.front();
    double max_eig = min_eig;
    double min_abs = std::abs(min_eig);
    for (double v : eig.eigenvalues) {
        min_eig = std::min(min_eig, v);
        max_eig = std::max(max_eig, v);
        min_abs = std::min(min_abs, std::abs(v));
    }

    FixedPointClass out;
    out.s_eigenvalues = eig.eigenvalues;
    if (max_eig < -tol) {
        out.kind = FixedPointKind::SymmetricUnstable;
    } else if (min_eig < -tol) {
        out.kind = FixedPointKind::StrictSaddle;
    } else if (min_abs > tol) {
        out.kind = FixedPointKind::SymmetricStable;
    } else {
        out.kind = FixedPointKind::Indeterminate;
    }
    return out;
}

}  // namespace nohd
