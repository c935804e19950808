#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nohd/errors.hpp"
#include "nohd/gamecore.hpp"
#include "nohd/linalg.hpp"
#include "nohd/matrix.hpp"

namespace nohd {

struct NohdConfig {
    double eta = 1.0;
    double m = 0.03;
    double ham_grad_floor = 1e-10;
    bool apply_eta_to_hamiltonian_branch = true;
    double fixed_point_tol = 1e-8;
    // With Monte-Carlo gradients, a cosine whose magnitude is below its own
    // propagated sampling error carries no sign information; treat it as the
    // exact-arithmetic zero it estimates. First-order propagation bounds the
    // cosine error by ~2·SE(ξ̂)/‖ξ̂‖; this scales that bound. Exact
    // evaluations have zero standard error, so this never affects them.
    double branch_noise_scale = 2.0;
};

enum class Branch { Potential, Hamiltonian, FixedPoint };

inline const char* to_string(Branch b) {
    switch (b) {
        case Branch::Potential: return "potential";
        case Branch::Hamiltonian: return "hamiltonian";
        case Branch::FixedPoint: return "fixed_point";
    }
    return "unknown";
}

struct UpdateStep {
    Vec direction;
    Branch branch = Branch::FixedPoint;
    double cos_s = std::numeric_limits<double>::quiet_NaN();
    double cos_a = std::numeric_limits<double>::quiet_NaN();
    bool used_pseudoinverse = false;
    bool degenerate_geometry = false;
    bool noise_floored = false;  // a cosine was zeroed as statistically indeterminate
};

namespace detail {

// |S|_m⁻¹ ξ through the eigenbasis without assembling the inverse matrix.
inline Vec pt_inverse_apply(const Matrix& s, double m, std::span<const double> xi) {
    if (!(m > 0.0)) throw ParameterError("pt_inverse floor m must be positive");
    const SymEig eig = sym_eig(s);
    Vec coords = eig.eigenvectors.apply_transposed(xi);
    for (std::size_t k = 0; k < coords.size(); ++k) {
        const double mag = std::abs(eig.eigenvalues[k]);
        coords[k] /= (mag >= m ? mag : m);
    }
    return eig.eigenvectors.apply(coords);
}

}  // namespace detail

/// Potential-branch Newton update Δθ = −η |S|_m⁻¹ ξ.
inline Vec newton_potential_step(const Decomposition& dec, std::span<const double> xi,
                                 const NohdConfig& cfg) {
    Vec dir = detail::pt_inverse_apply(dec.s, cfg.m, xi);
    for (double& v : dir) v *= -cfg.eta;
    return dir;
}

/// Hamiltonian-branch Newton update Δθ = −c A⁻¹ ξ, falling back to the
/// minimum-norm pseudoinverse solution when A is singular.
inline Vec newton_hamiltonian_step(const Decomposition& dec, std::span<const double> xi,
                                   const NohdConfig& cfg,
                                   bool* used_pseudoinverse = nullptr) {
    std::optional<Vec> sol = solve(dec.a, xi);
    bool pseudo = false;
    if (!sol) {
        sol = pseudo_solve(dec.a, xi);
        pseudo = true;
    }
    if (used_pseudoinverse) *used_pseudoinverse = pseudo;
    const double c = cfg.apply_eta_to_hamiltonian_branch ? cfg.eta : 1.0;
    for (double& v : *sol) v *= -c;
    return *sol;
}

namespace detail {

// Values this close to zero are what exact arithmetic would make exactly
// zero (antisymmetric quadratic forms); snapping keeps the branch rule on
// the exact-arithmetic path.
inline double snap_cosine(double c) { return std::abs(c) < 1e-12 ? 0.0 : c; }

inline double cosine_against(std::span<const double> u, std::span<const double> g,
                             double g_norm) {
    const double u_norm = norm(u);
    if (u_norm == 0.0) return 0.0;
    return snap_cosine(dot(u, g) / (u_norm * g_norm));
}

}  // namespace detail

/// One NOHD update: build both candidate Newton directions, compare their
/// cosines against ∇H, and pick the branch the sign rule selects. Ties go to
/// the potential branch. Returns a zero direction only at fixed points.
inline UpdateStep nohd_step(const GameEval& eval, const Decomposition& dec,
                            const NohdConfig& cfg) {
    UpdateStep out;
    const std::span<const double> xi = eval.sim_grad;
    if (norm(xi) <= cfg.fixed_point_tol) {
        out.branch = Branch::FixedPoint;
        out.direction.assign(xi.size(), 0.0);
        return out;
    }

    const Vec u_s = detail::pt_inverse_apply(dec.s, cfg.m, xi);
    std::optional<Vec> u_a = solve(dec.a, xi);
    if (!u_a) {
        u_a = pseudo_solve(dec.a, xi);
        out.used_pseudoinverse = true;
    }

    const double grad_h_norm = norm(dec.ham_grad);
    if (grad_h_norm <= cfg.ham_grad_floor) {
        // Both cosines are undefined; descend on the potential part.
        out.degenerate_geometry = true;
        out.branch = Branch::Potential;
        out.direction = scaled(u_s, -cfg.eta);
        return out;
    }

    out.cos_s = detail::cosine_against(u_s, dec.ham_grad, grad_h_norm);
    out.cos_a = detail::cosine_against(*u_a, dec.ham_grad, grad_h_norm);

    double branch_cos_s = out.cos_s;
    double branch_cos_a = out.cos_a;
    if (eval.sim_grad_se > 0.0) {
        const double tau = std::min(
            0.5, cfg.branch_noise_scale * eval.sim_grad_se / norm(xi));
        if (std::abs(branch_cos_s) < tau) {
            branch_cos_s = 0.0;
            out.noise_floored = true;
        }
        if (std::abs(branch_cos_a) < tau) {
            branch_cos_a = 0.0;
            out.noise_floored = true;
        }
    }

    bool take_potential;
    if (branch_cos_s >= 0.0)
        take_potential = branch_cos_s >= branch_cos_a;
    else
        take_potential = branch_cos_s <= branch_cos_a;

    if (take_potential) {
        out.branch = Branch::Potential;
        out.direction = scaled(u_s, -cfg.eta);
    } else {
        out.branch = Branch::Hamiltonian;
        const double c = cfg.apply_eta_to_hamiltonian_branch ? cfg.eta : 1.0;
        out.direction = scaled(*u_a, -c);
    }
    return out;
}

enum class Algorithm { Nohd, Gd, Sga, Co, Igapp, Lola, Sos, Cgd };

inline const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::Nohd: return "nohd";
        case Algorithm::Gd: return "gd";
        case Algorithm::Sga: return "sga";
        case Algorithm::Co: return "co";
        case Algorithm::Igapp: return "igapp";
        case Algorithm::Lola: return "lola";
        case Algorithm::Sos: return "sos";
        case Algorithm::Cgd: return "cgd";
    }
    return "unknown";
}

inline Algorithm algorithm_from_string(const std::string& s) {
    for (Algorithm a : {Algorithm::Nohd, Algorithm::Gd, Algorithm::Sga, Algorithm::Co,
                        Algorithm::Igapp, Algorithm::Lola, Algorithm::Sos, Algorithm::Cgd})
        if (s == to_string(a)) return a;
    throw ConfigError("unknown algorithm '" + s + "'");
}

inline const std::vector<Algorithm>& all_algorithms() {
    static const std::vector<Algorithm> all = {
        Algorithm::Nohd, Algorithm::Gd,   Algorithm::Sga, Algorithm::Co,
        Algorithm::Igapp, Algorithm::Lola, Algorithm::Sos, Algorithm::Cgd};
    return all;
}

struct BaselineHyper {
    double eta = 1.0;
    std::optional<double> alpha;  // lookahead/shaping step, defaults to eta
    double sga_lambda = 1.0;
    double co_gamma = 1.0;
    double sos_a = 0.5;
    double sos_b = 0.1;

    double alpha_or_eta() const { return alpha.value_or(eta); }
};

namespace detail {

// Ĥ with the per-player diagonal blocks zeroed.
inline Matrix opponent_jacobian(const Matrix& jac,
                                const std::vector<std::size_t>& block_dims) {
    Matrix h = jac;
    std::size_t off = 0;
    for (std::size_t d : block_dims) {
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) h(off + r, off + c) = 0.0;
        off += d;
    }
    return h;
}

// Opponent-shaping term: block i is Σ_{j≠i} (Ĥ_{j,i})ᵀ ∇_{θ_j} V_i, where
// Ĥ_{j,i} is the (j,i) block of the Jacobian and ∇_{θ_j} V_i comes from the
// full gradient table.
inline Vec shaping_term(const GameEval& eval) {
    const std::size_t n = eval.block_dims.size();
    std::vector<std::size_t> offs(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offs[i + 1] = offs[i] + eval.block_dims[i];

    Vec chi(eval.sim_grad.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            for (std::size_t c = 0; c < eval.block_dims[i]; ++c) {
                double acc = 0.0;
                for (std::size_t r = 0; r < eval.block_dims[j]; ++r)
                    acc += eval.jacobian(offs[j] + r, offs[i] + c) *
                           eval.full_grads(i, offs[j] + r);
                chi[offs[i] + c] += acc;
            }
        }
    }
    return chi;
}

}  // namespace detail

/// One update of a baseline algorithm. All baselines minimize cost; the
/// formulas are the fixed implementation contract shared by the benchmark.
inline Vec baseline_step(Algorithm alg, const GameEval& eval, const Decomposition& dec,
                         const BaselineHyper& hyper) {
    const std::span<const double> xi = eval.sim_grad;
    const double eta = hyper.eta;
    switch (alg) {
        case Algorithm::Gd:
            return scaled(xi, -eta);
        case Algorithm::Sga: {
            Vec adj = dec.a.apply_transposed(xi);
            for (std::size_t i = 0; i < adj.size(); ++i)
                adj[i] = xi[i] + hyper.sga_lambda * adj[i];
            return scaled(adj, -eta);
        }
        case Algorithm::Co: {
            Vec adj = eval.jacobian.apply_transposed(xi);
            for (std::size_t i = 0; i < adj.size(); ++i)
                adj[i] = xi[i] + hyper.co_gamma * adj[i];
            return scaled(adj, -eta);
        }
        case Algorithm::Igapp: {
            const double alpha = hyper.alpha_or_eta();
            const Matrix ho = detail::opponent_jacobian(eval.jacobian, eval.block_dims);
            const Vec ho_xi = ho.apply(xi);
            Vec dir(xi.size());
            for (std::size_t i = 0; i < dir.size(); ++i)
                dir[i] = xi[i] - alpha * ho_xi[i];
            return scaled(dir, -eta);
        }
        case Algorithm::Lola: {
            const double alpha = hyper.alpha_or_eta();
            const Matrix ho = detail::opponent_jacobian(eval.jacobian, eval.block_dims);
            const Vec ho_xi = ho.apply(xi);
            const Vec chi = detail::shaping_term(eval);
            Vec dir(xi.size());
            for (std::size_t i = 0; i < dir.size(); ++i)
                dir[i] = xi[i] - alpha * ho_xi[i] - alpha * chi[i];
            return scaled(dir, -eta);
        }
        case Algorithm::Sos: {
            const double alpha = hyper.alpha_or_eta();
            const Matrix ho = detail::opponent_jacobian(eval.jacobian, eval.block_dims);
            const Vec ho_xi = ho.apply(xi);
            Vec xi0(xi.size());
            for (std::size_t i = 0; i < xi0.size(); ++i) xi0[i] = xi[i] - alpha * ho_xi[i];
            const Vec chi = detail::shaping_term(eval);
            const Vec shaping = scaled(chi, -alpha);

            double p1 = 1.0;
            const double inner = dot(shaping, xi0);
            if (inner < 0.0)
                p1 = std::min(1.0, -hyper.sos_a * dot(xi0, xi0) / inner);
            const double xi_norm = norm(xi);
            const double p2 = xi_norm < hyper.sos_b ? xi_norm * xi_norm : 1.0;
            const double p = std::min(p1, p2);

            Vec dir(xi.size());
            for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = xi0[i] + p * shaping[i];
            return scaled(dir, -eta);
        }
        case Algorithm::Cgd: {
            const Matrix ho = detail::opponent_jacobian(eval.jacobian, eval.block_dims);
            Matrix system = Matrix::identity(xi.size());
            for (std::size_t r = 0; r < system.rows(); ++r)
                for (std::size_t c = 0; c < system.cols(); ++c)
                    system(r, c) += eta * ho(r, c);
            std::optional<Vec> sol = solve(system, xi);
            if (!sol) sol = pseudo_solve(system, xi);
            return scaled(*sol, -eta);
        }
        case Algorithm::Nohd:
            throw ParameterError("use nohd_step for the NOHD update");
    }
    throw ParameterError("unknown algorithm");
}

/// One point of a trajectory: the parameters before the update computed at
/// them and the update's diagnostics. The final point of a run carries no
/// update fields.
struct StepRecord {
    Vec theta;
    Vec values;
    double xi_norm = 0.0;
    std::optional<Branch> branch;
    double cos_s = std::numeric_limits<double>::quiet_NaN();
    double cos_a = std::numeric_limits<double>::quiet_NaN();
    bool used_pseudoinverse = false;
    bool degenerate_geometry = false;
};

struct Trace {
    std::vector<StepRecord> steps;
    std::optional<std::size_t> domain_exit_step;
    bool numerical_failure = false;
    std::string failure_message;
    std::size_t updates = 0;
    double update_seconds = 0.0;  // total time spent in evaluate + update

    double seconds_per_update() const {
        return updates ? update_seconds / static_cast<double>(updates) : 0.0;
    }
};

struct RunOptions {
    NohdConfig nohd;
    BaselineHyper hyper;
    std::optional<double> stop_xi_tol;  // stop early once ‖ξ‖ falls below
};

using Evaluator = std::function<GameEval(const ParamVector&, std::size_t step)>;

/// Iterate an update rule from θ₀ for `steps` updates, recording every
/// visited point. A domain exit or non-finite update stops the run and is
/// recorded with its step index.
inline Trace run_with(const Evaluator& evaluator, Algorithm alg, ParamVector theta,
                      std::size_t steps, const RunOptions& opts = {}) {
    Trace trace;
    using clock = std::chrono::steady_clock;
    for (std::size_t t = 0; t <= steps; ++t) {
        const auto started = clock::now();
        GameEval eval;
        try {
            eval = evaluator(theta, t);
        } catch (const DomainError&) {
            trace.domain_exit_step = t;
            break;
        }
        const Decomposition dec = decompose(eval);

        StepRecord rec;
        rec.theta.assign(theta.flat().begin(), theta.flat().end());
        rec.values = eval.values;
        rec.xi_norm = norm(eval.sim_grad);

        if (t == steps) {
            trace.steps.push_back(std::move(rec));
            break;
        }

        Vec direction;
        if (alg == Algorithm::Nohd) {
            NohdConfig cfg = opts.nohd;
            UpdateStep step = nohd_step(eval, dec, cfg);
            rec.branch = step.branch;
            rec.cos_s = step.cos_s;
            rec.cos_a = step.cos_a;
            rec.used_pseudoinverse = step.used_pseudoinverse;
            rec.degenerate_geometry = step.degenerate_geometry;
            direction = std::move(step.direction);
        } else {
            direction = baseline_step(alg, eval, dec, opts.hyper);
        }
        trace.update_seconds +=
            std::chrono::duration<double>(clock::now() - started).count();
        trace.updates += 1;

        const bool stop_now = opts.stop_xi_tol && rec.xi_norm <= *opts.stop_xi_tol;
        trace.steps.push_back(std::move(rec));
        if (stop_now) break;

        if (!all_finite(direction)) {
            trace.numerical_failure = true;
            trace.failure_message = "non-finite update direction at step " +
                                    std::to_string(t);
            break;
        }
        Vec next = add(theta.flat(), direction);
        if (!all_finite(next)) {
            trace.numerical_failure = true;
            trace.failure_message = "non-finite parameters at step " + std::to_string(t);
            break;
        }
        theta = theta.with_flat(std::move(next));
    }
    return trace;
}

inline Trace run(const Game& game, Algorithm alg, const ParamVector& theta0,
                 std::size_t steps, const RunOptions& opts = {}) {
    if (steps < 1) throw ParameterError("run needs at least one step");
    return run_with(
        [&game](const ParamVector& th, std::size_t) { return evaluate(game, th); }, alg,
        theta0, steps, opts);
}

}  // namespace nohd
