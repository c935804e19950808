#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "nohd/dual.hpp"
#include "nohd/errors.hpp"
#include "nohd/games.hpp"
#include "nohd/gamecore.hpp"
#include "nohd/matrix.hpp"
#include "nohd/optim.hpp"
#include "nohd/rng.hpp"

namespace nohd {

/// One sampled episode: states, joint actions and per-player costs per step.
struct Episode {
    std::vector<int> states;                 // [t]
    std::vector<std::vector<int>> actions;   // [t][player]
    std::vector<Vec> costs;                  // [t][player]

    std::size_t length() const { return states.size(); }
};

/// M episodes sampled under one fixed θ, together with everything the
/// estimators need to reweight them.
struct TrajectoryBatch {
    std::vector<Episode> episodes;
    Vec discounts;                   // per player
    ParamVector theta;
    std::vector<PolicyMap> policies;
};

/// Episodic multi-agent environment: reset(seed) starts an episode, step
/// applies a joint action and reports the per-player costs.
class Environment {
  public:
    struct StepResult {
        int next_state = 0;
        Vec costs;
        bool done = true;
    };

    virtual ~Environment() = default;
    virtual std::size_t players() const = 0;
    virtual int reset(std::uint64_t seed) = 0;
    virtual StepResult step(std::span<const int> joint_action) = 0;
};

/// Horizon-1 environment wrapping a matrix game: a single state, one joint
/// action, costs read from the cost tensors.
class MatrixGameEnv : public Environment {
  public:
    explicit MatrixGameEnv(MatrixGame game) : game_(std::move(game)) {}

    std::size_t players() const override { return game_.players(); }
    int reset(std::uint64_t) override { return 0; }
    StepResult step(std::span<const int> joint_action) override {
        if (joint_action.size() != 2)
            throw DimensionError("matrix game expects one action per player");
        StepResult r;
        r.costs = {game_.cost(0, joint_action[0], joint_action[1]),
                   game_.cost(1, joint_action[0], joint_action[1])};
        r.done = true;
        return r;
    }

    const MatrixGame& game() const { return game_; }

  private:
    MatrixGame game_;
};

namespace detail {

inline int sample_action(std::span<const double> probs, std::mt19937_64& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t a = 0; a + 1 < probs.size(); ++a) {
        acc += probs[a];
        if (u < acc) return static_cast<int>(a);
    }
    return static_cast<int>(probs.size() - 1);
}

inline Vec grad_log_prob(const PolicyMap& policy, std::span<const double> theta,
                         int action) {
    return policy.grad_log_prob(theta, static_cast<std::size_t>(action));
}

}  // namespace detail

/// Sample M episodes of at most `horizon` steps under θ. Deterministic given
/// the seed: each episode draws from its own substream, and estimators fold
/// episodes in index order.
inline TrajectoryBatch sample_batch(Environment& env,
                                    std::span<const PolicyMap> policies,
                                    const ParamVector& theta, std::size_t episodes,
                                    std::size_t horizon, std::uint64_t seed) {
    if (episodes < 1 || horizon < 1)
        throw ParameterError("sample_batch needs at least one episode and one step");
    const std::size_t n = policies.size();
    if (theta.players() != n)
        throw DimensionError("parameter blocks do not match the policy count");

    // θ is fixed for the whole batch, so per-player distributions are too.
    std::vector<Vec> probs;
    for (std::size_t i = 0; i < n; ++i)
        probs.push_back(policies[i].probabilities(theta.block(i)));

    TrajectoryBatch batch;
    batch.theta = theta;
    batch.policies.assign(policies.begin(), policies.end());
    batch.discounts.assign(n, 1.0);
    if (const auto* menv = dynamic_cast<const MatrixGameEnv*>(&env))
        batch.discounts = menv->game().discounts();

    batch.episodes.reserve(episodes);
    for (std::size_t m = 0; m < episodes; ++m) {
        const std::uint64_t sub = mix_seed(seed, m);
        std::mt19937_64 rng(sub);
        Episode ep;
        int state = env.reset(splitmix64(sub));
        for (std::size_t t = 0; t < horizon; ++t) {
            std::vector<int> joint(n);
            for (std::size_t i = 0; i < n; ++i)
                joint[i] = detail::sample_action(probs[i], rng);
            Environment::StepResult r = env.step(joint);
            ep.states.push_back(state);
            ep.actions.push_back(std::move(joint));
            ep.costs.push_back(std::move(r.costs));
            state = r.next_state;
            if (r.done) break;
        }
        batch.episodes.push_back(std::move(ep));
    }
    return batch;
}

namespace detail {

// Likelihood-ratio gradient of V_{cost_player} with respect to
// θ_{score_player}: (1/M) Σ_m Σ_t γ^t C_t Σ_{t'≤t} ∇log π(u_{t'}).
inline Vec score_gradient(const TrajectoryBatch& batch, std::size_t cost_player,
                          std::size_t score_player, Vec* standard_errors) {
    const PolicyMap& pol = batch.policies[score_player];
    const std::span<const double> theta = batch.theta.block(score_player);
    const double gamma = batch.discounts[cost_player];
    const std::size_t d = pol.param_dim();

    Vec sum(d, 0.0), sumsq(d, 0.0);
    for (const Episode& ep : batch.episodes) {
        Vec prefix(d, 0.0);
        Vec contrib(d, 0.0);
        double discount = 1.0;
        for (std::size_t t = 0; t < ep.length(); ++t) {
            const Vec g = grad_log_prob(pol, theta, ep.actions[t][score_player]);
            for (std::size_t r = 0; r < d; ++r) prefix[r] += g[r];
            const double w = discount * ep.costs[t][cost_player];
            for (std::size_t r = 0; r < d; ++r) contrib[r] += w * prefix[r];
            discount *= gamma;
        }
        for (std::size_t r = 0; r < d; ++r) {
            sum[r] += contrib[r];
            sumsq[r] += contrib[r] * contrib[r];
        }
    }
    const double inv_m = 1.0 / static_cast<double>(batch.episodes.size());
    Vec mean(d);
    if (standard_errors) standard_errors->assign(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
        mean[r] = sum[r] * inv_m;
        const double var = std::max(0.0, sumsq[r] * inv_m - mean[r] * mean[r]);
        if (standard_errors) (*standard_errors)[r] = std::sqrt(var * inv_m);
    }
    return mean;
}

}  // namespace detail

/// First-order estimator of ∇_{θ_i} V_i.
inline Vec grad_estimate(const TrajectoryBatch& batch, std::size_t player) {
    if (batch.episodes.empty()) throw ParameterError("grad_estimate needs episodes");
    return detail::score_gradient(batch, player, player, nullptr);
}

/// Cross second-order estimator of ∇_{θ_k, θ_j} V_i for k ≠ j, using the
/// independence of the two players' policies.
inline Matrix cross_hess_estimate(const TrajectoryBatch& batch, std::size_t i,
                                  std::size_t k, std::size_t j,
                                  double* max_standard_error = nullptr) {
    if (k == j)
        throw ParameterError("cross_hess_estimate requires distinct players; "
                             "use diag_hess_estimate for k = j");
    const PolicyMap& pol_k = batch.policies[k];
    const PolicyMap& pol_j = batch.policies[j];
    const std::span<const double> theta_k = batch.theta.block(k);
    const std::span<const double> theta_j = batch.theta.block(j);
    const double gamma = batch.discounts[i];
    const std::size_t dk = pol_k.param_dim();
    const std::size_t dj = pol_j.param_dim();

    Matrix sum(dk, dj), sumsq(dk, dj);
    for (const Episode& ep : batch.episodes) {
        Matrix prefix(dk, dj);
        Matrix contrib(dk, dj);
        double discount = 1.0;
        for (std::size_t t = 0; t < ep.length(); ++t) {
            const Vec gk = detail::grad_log_prob(pol_k, theta_k, ep.actions[t][k]);
            const Vec gj = detail::grad_log_prob(pol_j, theta_j, ep.actions[t][j]);
            for (std::size_t r = 0; r < dk; ++r)
                for (std::size_t c = 0; c < dj; ++c) prefix(r, c) += gk[r] * gj[c];
            const double w = discount * ep.costs[t][i];
            for (std::size_t r = 0; r < dk; ++r)
                for (std::size_t c = 0; c < dj; ++c) contrib(r, c) += w * prefix(r, c);
            discount *= gamma;
        }
        for (std::size_t r = 0; r < dk; ++r)
            for (std::size_t c = 0; c < dj; ++c) {
                sum(r, c) += contrib(r, c);
                sumsq(r, c) += contrib(r, c) * contrib(r, c);
            }
    }
    const double inv_m = 1.0 / static_cast<double>(batch.episodes.size());
    Matrix mean(dk, dj);
    double max_se = 0.0;
    for (std::size_t r = 0; r < dk; ++r)
        for (std::size_t c = 0; c < dj; ++c) {
            mean(r, c) = sum(r, c) * inv_m;
            const double var =
                std::max(0.0, sumsq(r, c) * inv_m - mean(r, c) * mean(r, c));
            max_se = std::max(max_se, std::sqrt(var * inv_m));
        }
    if (max_standard_error) *max_standard_error = max_se;
    return mean;
}

/// Diagonal second-order estimator of ∇²_{θ_k} V_i via the scalar episode
/// functional Φ(θ_k) = Σ_t γ^t C_t Σ_{t'≤t} log π_{θ_k}(u_{t'}):
/// (1/M) Σ_m [∇Φ_m ∇log π(τ_m)ᵀ + ∇²Φ_m], derivatives of Φ taken exactly.
inline Matrix diag_hess_estimate(const TrajectoryBatch& batch, std::size_t i,
                                 std::size_t k, double* max_standard_error = nullptr) {
    const PolicyMap& pol = batch.policies[k];
    const std::span<const double> theta = batch.theta.block(k);
    const double gamma = batch.discounts[i];
    const std::size_t d = pol.param_dim();

    Matrix sum(d, d), sumsq(d, d);
    for (const Episode& ep : batch.episodes) {
        const GradHess phi = grad_hess(
            [&](std::span<const Dual2> th) {
                Dual2 acc = Dual2::constant(0.0, th.size());
                double discount = 1.0;
                Dual2 log_prefix = Dual2::constant(0.0, th.size());
                for (std::size_t t = 0; t < ep.length(); ++t) {
                    log_prefix += pol.log_prob(
                        th, static_cast<std::size_t>(ep.actions[t][k]));
                    acc += (discount * ep.costs[t][i]) * log_prefix;
                    discount *= gamma;
                }
                return acc;
            },
            theta);

        Vec score(d, 0.0);
        for (std::size_t t = 0; t < ep.length(); ++t) {
            const Vec g = detail::grad_log_prob(pol, theta, ep.actions[t][k]);
            for (std::size_t r = 0; r < d; ++r) score[r] += g[r];
        }

        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) {
                const double v = phi.grad[r] * score[c] + phi.hess(r, c);
                sum(r, c) += v;
                sumsq(r, c) += v * v;
            }
    }
    const double inv_m = 1.0 / static_cast<double>(batch.episodes.size());
    Matrix mean(d, d);
    double max_se = 0.0;
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) {
            mean(r, c) = sum(r, c) * inv_m;
            const double var =
                std::max(0.0, sumsq(r, c) * inv_m - mean(r, c) * mean(r, c));
            max_se = std::max(max_se, std::sqrt(var * inv_m));
        }
    if (max_standard_error) *max_standard_error = max_se;
    return mean;
}

/// Monte-Carlo estimate of ξ and Ĥ assembled from the per-block estimators,
/// plus per-block standard errors. The Jacobian is not symmetrized here; the
/// Helmholtz decomposition is the symmetrization mechanism.
struct JacobianEstimate {
    Vec values;
    Vec sim_grad;
    Matrix jacobian;
    Matrix full_grads;
    Vec grad_standard_error;     // per player, max over own-block entries
    Matrix block_standard_error; // (i, j): max over entries of that Ĥ block
    std::vector<std::size_t> block_dims;
    double sim_grad_se = 0.0;    // ‖per-entry standard errors of ξ̂‖
};

inline JacobianEstimate jacobian_estimate(const TrajectoryBatch& batch) {
    if (batch.episodes.empty()) throw ParameterError("jacobian_estimate needs episodes");
    const std::size_t n = batch.policies.size();
    const std::size_t total = batch.theta.dim();
    std::vector<std::size_t> offs(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offs[i + 1] = offs[i] + batch.theta.block_dim(i);

    JacobianEstimate est;
    est.block_dims = batch.theta.block_dims();
    est.values.assign(n, 0.0);
    est.sim_grad.assign(total, 0.0);
    est.jacobian = Matrix(total, total);
    est.full_grads = Matrix(n, total);
    est.grad_standard_error.assign(n, 0.0);
    est.block_standard_error = Matrix(n, n);

    const double inv_m = 1.0 / static_cast<double>(batch.episodes.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (const Episode& ep : batch.episodes) {
            double discount = 1.0;
            for (std::size_t t = 0; t < ep.length(); ++t) {
                est.values[i] += discount * ep.costs[t][i];
                discount *= batch.discounts[i];
            }
        }
        est.values[i] *= inv_m;

        for (std::size_t j = 0; j < n; ++j) {
            Vec se;
            const Vec g = detail::score_gradient(batch, i, j, &se);
            for (std::size_t c = 0; c < g.size(); ++c)
                est.full_grads(i, offs[j] + c) = g[c];
            if (j == i) {
                est.grad_standard_error[i] = max_abs(se);
                for (std::size_t c = 0; c < g.size(); ++c) {
                    est.sim_grad[offs[i] + c] = g[c];
                    est.sim_grad_se += se[c] * se[c];
                }
            }

            double block_se = 0.0;
            const Matrix block = (j == i)
                                     ? diag_hess_estimate(batch, i, i, &block_se)
                                     : cross_hess_estimate(batch, i, i, j, &block_se);
            for (std::size_t r = 0; r < block.rows(); ++r)
                for (std::size_t c = 0; c < block.cols(); ++c)
                    est.jacobian(offs[i] + r, offs[j] + c) = block(r, c);
            est.block_standard_error(i, j) = block_se;
        }
    }
    est.sim_grad_se = std::sqrt(est.sim_grad_se);
    return est;
}

inline GameEval to_game_eval(const JacobianEstimate& est) {
    GameEval eval;
    eval.values = est.values;
    eval.sim_grad = est.sim_grad;
    eval.jacobian = est.jacobian;
    eval.full_grads = est.full_grads;
    eval.block_dims = est.block_dims;
    eval.sim_grad_se = est.sim_grad_se;
    return eval;
}

/// Evaluator for sampled-mode runs: a fresh batch per update, with the batch
/// seed derived from (seed, step).
inline Evaluator sampled_evaluator(MatrixGame game, std::size_t episodes,
                                   std::size_t horizon, std::uint64_t seed) {
    auto env = std::make_shared<MatrixGameEnv>(std::move(game));
    return [env, episodes, horizon, seed](const ParamVector& theta, std::size_t step) {
        const TrajectoryBatch batch =
            sample_batch(*env, env->game().policies(), theta, episodes, horizon,
                         mix_seed(seed, step));
        return to_game_eval(jacobian_estimate(batch));
    };
}

}  // namespace nohd
