#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nohd/config.hpp"
#include "nohd/dual.hpp"
#include "nohd/errors.hpp"
#include "nohd/gamecore.hpp"
#include "nohd/matrix.hpp"

namespace nohd {

inline double value_of(double x) { return x; }
inline double value_of(const Dual2& x) { return x.value(); }

inline double zero_like(const double&) { return 0.0; }
inline Dual2 zero_like(const Dual2& x) { return Dual2::constant(0.0, x.dims()); }

enum class Parametrization { Linear, Boltzmann };

inline const char* to_string(Parametrization p) {
    return p == Parametrization::Linear ? "linear" : "boltzmann";
}

inline Parametrization parametrization_from_string(const std::string& s) {
    if (s == "linear") return Parametrization::Linear;
    if (s == "boltzmann") return Parametrization::Boltzmann;
    throw ConfigError("unknown parametrization '" + s + "'");
}

/// Map from a per-player parameter block to a distribution over actions.
///
/// Boltzmann uses one parameter per action, π(a) ∝ exp(θ_a). The softmax is
/// shift-invariant; initialization fixes the gauge as θ_a = log p_a.
/// Linear uses the first k−1 probabilities as the parameters directly and is
/// only defined strictly inside the simplex.
class PolicyMap {
  public:
    PolicyMap() = default;
    PolicyMap(Parametrization kind, std::size_t actions)
        : kind_(kind), actions_(actions) {}

    Parametrization kind() const { return kind_; }
    std::size_t actions() const { return actions_; }
    std::size_t param_dim() const {
        return kind_ == Parametrization::Boltzmann ? actions_ : actions_ - 1;
    }

    template <class T>
    std::vector<T> probabilities(std::span<const T> theta) const {
        if (theta.size() != param_dim())
            throw DimensionError("policy parameter block has the wrong length");
        std::vector<T> p;
        p.reserve(actions_);
        if (kind_ == Parametrization::Boltzmann) {
            double shift = value_of(theta[0]);
            for (const T& t : theta) shift = std::max(shift, value_of(t));
            T z = zero_like(theta[0]);
            for (const T& t : theta) {
                p.push_back(exp(t - shift));
                z += p.back();
            }
            for (T& e : p) e = e / z;
        } else {
            T rest = zero_like(theta[0]);
            for (const T& t : theta) {
                if (!(value_of(t) > 0.0))
                    throw DomainError("linear policy parameter outside the open simplex");
                p.push_back(t);
                rest += t;
            }
            T last = 1.0 - rest;
            if (!(value_of(last) > 0.0))
                throw DomainError("linear policy parameter outside the open simplex");
            p.push_back(std::move(last));
        }
        return p;
    }

    template <class T>
    T log_prob(std::span<const T> theta, std::size_t action) const {
        if (action >= actions_) throw DimensionError("action index out of range");
        if (kind_ == Parametrization::Boltzmann) {
            double shift = value_of(theta[0]);
            for (const T& t : theta) shift = std::max(shift, value_of(t));
            T z = zero_like(theta[0]);
            for (const T& t : theta) z += exp(t - shift);
            return theta[action] - shift - log(z);
        }
        std::vector<T> p = probabilities(theta);
        return log(p[action]);
    }

    /// Closed-form ∇_θ log π(action). Boltzmann: e_a − π; linear: 1/p_a on
    /// the owning coordinate (all coordinates, negated, for the last action).
    Vec grad_log_prob(std::span<const double> theta, std::size_t action) const {
        if (action >= actions_) throw DimensionError("action index out of range");
        const std::size_t d = param_dim();
        Vec g(d, 0.0);
        if (kind_ == Parametrization::Boltzmann) {
            const std::vector<double> p = probabilities(theta);
            for (std::size_t i = 0; i < d; ++i) g[i] = -p[i];
            g[action] += 1.0;
        } else {
            const std::vector<double> p = probabilities(theta);
            if (action + 1 == actions_) {
                for (std::size_t i = 0; i < d; ++i) g[i] = -1.0 / p.back();
            } else {
                g[action] = 1.0 / p[action];
            }
        }
        return g;
    }

    /// Parameters reproducing the given distribution (Boltzmann: log p).
    Vec theta_from_probabilities(std::span<const double> probs) const {
        if (probs.size() != actions_)
            throw DimensionError("probability vector has the wrong length");
        double total = 0.0;
        for (double p : probs) {
            if (!(p > 0.0))
                throw DomainError("initial probabilities must be strictly positive");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw DomainError("initial probabilities must sum to 1");
        Vec theta;
        if (kind_ == Parametrization::Boltzmann) {
            for (double p : probs) theta.push_back(std::log(p));
        } else {
            theta.assign(probs.begin(), probs.end() - 1);
        }
        return theta;
    }

  private:
    Parametrization kind_ = Parametrization::Boltzmann;
    std::size_t actions_ = 0;
};

/// Two-player matrix game at horizon 1. Cost tensors are stored as costs
/// (minimization); payoff tables are negated on load. Expected cost is
/// bilinear in the mixed strategies: V_i = π_1ᵀ C_i π_2.
class MatrixGame : public Game {
  public:
    MatrixGame(std::string name, std::vector<std::size_t> actions,
               std::vector<Matrix> costs, Parametrization param,
               Vec discounts = {})
        : name_(std::move(name)),
          actions_(std::move(actions)),
          costs_(std::move(costs)),
          discounts_(std::move(discounts)) {
        if (actions_.size() != 2 || costs_.size() != 2)
            throw DimensionError("matrix games support exactly two players");
        for (const Matrix& c : costs_)
            if (c.rows() != actions_[0] || c.cols() != actions_[1])
                throw DimensionError("cost tensor shape does not match action counts");
        if (discounts_.empty()) discounts_.assign(2, 1.0);
        for (std::size_t i = 0; i < 2; ++i)
            policies_.emplace_back(param, actions_[i]);
    }

    static MatrixGame from_payoff_tables(std::string name,
                                         std::vector<std::size_t> actions,
                                         const std::vector<Matrix>& payoffs,
                                         Parametrization param, Vec discounts = {}) {
        std::vector<Matrix> costs;
        for (const Matrix& p : payoffs) costs.push_back(p * -1.0);
        return MatrixGame(std::move(name), std::move(actions), std::move(costs), param,
                          std::move(discounts));
    }

    static MatrixGame matching_pennies(Parametrization param) {
        return from_payoff_tables(
            "mp", {2, 2},
            {Matrix{{1, -1}, {-1, 1}}, Matrix{{-1, 1}, {1, -1}}}, param);
    }

    static MatrixGame rock_paper_scissors(Parametrization param) {
        return from_payoff_tables(
            "rps", {3, 3},
            {Matrix{{0, -1, 1}, {1, 0, -1}, {-1, 1, 0}},
             Matrix{{0, 1, -1}, {-1, 0, 1}, {1, -1, 0}}},
            param);
    }

    static MatrixGame dilemma(Parametrization param) {
        return from_payoff_tables(
            "dilemma", {2, 2},
            {Matrix{{-1, -3}, {0, -2}}, Matrix{{-1, 0}, {-3, -2}}}, param);
    }

    static MatrixGame by_name(const std::string& name, Parametrization param) {
        if (name == "mp" || name == "matching_pennies") return matching_pennies(param);
        if (name == "rps" || name == "rock_paper_scissors")
            return rock_paper_scissors(param);
        if (name == "dilemma") return dilemma(param);
        throw UnsupportedError("unknown built-in game '" + name + "'");
    }

    std::size_t players() const override { return 2; }
    std::vector<std::size_t> block_dims() const override {
        return {policies_[0].param_dim(), policies_[1].param_dim()};
    }
    double value(std::size_t player, std::span<const double> theta) const override {
        return value_impl(player, theta);
    }
    Dual2 value(std::size_t player, std::span<const Dual2> theta) const override {
        return value_impl(player, theta);
    }

    const std::string& name() const { return name_; }
    const std::vector<std::size_t>& action_counts() const { return actions_; }
    double cost(std::size_t player, std::size_t a1, std::size_t a2) const {
        return costs_[player](a1, a2);
    }
    const std::vector<PolicyMap>& policies() const { return policies_; }
    const Vec& discounts() const { return discounts_; }

    ParamVector theta_from_probabilities(const std::vector<Vec>& probs) const {
        if (probs.size() != 2) throw DimensionError("need one distribution per player");
        std::vector<Vec> blocks;
        for (std::size_t i = 0; i < 2; ++i)
            blocks.push_back(policies_[i].theta_from_probabilities(probs[i]));
        return ParamVector::from_blocks(blocks);
    }

    /// Per-player action distributions at θ.
    std::vector<Vec> action_probabilities(const ParamVector& theta) const {
        std::vector<Vec> out;
        for (std::size_t i = 0; i < 2; ++i)
            out.push_back(policies_[i].probabilities(theta.block(i)));
        return out;
    }

  private:
    template <class T>
    T value_impl(std::size_t player, std::span<const T> theta) const {
        if (player >= 2) throw DimensionError("player index out of range");
        const std::size_t d1 = policies_[0].param_dim();
        const std::size_t d2 = policies_[1].param_dim();
        if (theta.size() != d1 + d2)
            throw DimensionError("joint parameter length does not match the game");
        const std::vector<T> p1 = policies_[0].probabilities(theta.subspan(0, d1));
        const std::vector<T> p2 = policies_[1].probabilities(theta.subspan(d1, d2));
        T acc = zero_like(theta[0]);
        for (std::size_t a = 0; a < actions_[0]; ++a)
            for (std::size_t b = 0; b < actions_[1]; ++b)
                acc += (p1[a] * p2[b]) * costs_[player](a, b);
        return acc;
    }

    std::string name_;
    std::vector<std::size_t> actions_;
    std::vector<Matrix> costs_;
    Vec discounts_;
    std::vector<PolicyMap> policies_;
};

/// Exact expected cost of one player (convenience over MatrixGame::value).
inline double expected_cost(const MatrixGame& game, const ParamVector& theta,
                            std::size_t player) {
    return game.value(player, theta.flat());
}

/// Reference mixed strategies: MP and RPS mix uniformly, Dilemma plays the
/// dominant action.
inline std::vector<Vec> nash_reference(const MatrixGame& game) {
    if (game.name() == "mp") return {{0.5, 0.5}, {0.5, 0.5}};
    if (game.name() == "rps")
        return {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}};
    if (game.name() == "dilemma") return {{0.0, 1.0}, {0.0, 1.0}};
    throw UnsupportedError("no Nash reference for game '" + game.name() + "'");
}

enum class AnalyticKind { Bilinear, QuadraticPotential, PerturbedHamiltonian };

struct AnalyticParams {
    std::size_t dim_per_player = 1;
    std::optional<Matrix> coupling;   // bilinear: d×d, defaults to identity
    std::optional<Matrix> potential;  // quadratic: 2d×2d, defaults to identity
    double epsilon = 0.05;            // perturbed Hamiltonian cubic weight
};

/// Closed-form two-player test games.
///
/// bilinear:              V1 = θ1ᵀ M θ2,      V2 = −V1
/// quadratic_potential:   V1 = V2 = φ(θ) = ½ θᵀ P θ
/// perturbed_hamiltonian: V1 = θ1 θ2 + ε θ1³, V2 = −θ1 θ2 + ε θ2³
class AnalyticGame : public Game {
  public:
    AnalyticGame(AnalyticKind kind, AnalyticParams params)
        : kind_(kind), params_(std::move(params)) {
        const std::size_t d = params_.dim_per_player;
        if (d == 0) throw ParameterError("dim_per_player must be positive");
        if (kind_ == AnalyticKind::PerturbedHamiltonian && d != 1)
            throw ParameterError("perturbed Hamiltonian game is scalar per player");
        if (kind_ == AnalyticKind::Bilinear) {
            if (!params_.coupling) params_.coupling = Matrix::identity(d);
            if (params_.coupling->rows() != d || params_.coupling->cols() != d)
                throw DimensionError("coupling matrix shape mismatch");
        }
        if (kind_ == AnalyticKind::QuadraticPotential) {
            if (!params_.potential) params_.potential = Matrix::identity(2 * d);
            if (params_.potential->rows() != 2 * d || params_.potential->cols() != 2 * d)
                throw DimensionError("potential matrix shape mismatch");
        }
    }

    AnalyticKind kind() const { return kind_; }
    std::size_t players() const override { return 2; }
    std::vector<std::size_t> block_dims() const override {
        return {params_.dim_per_player, params_.dim_per_player};
    }
    double value(std::size_t player, std::span<const double> theta) const override {
        return value_impl(player, theta);
    }
    Dual2 value(std::size_t player, std::span<const Dual2> theta) const override {
        return value_impl(player, theta);
    }

    bool has_potential() const { return kind_ == AnalyticKind::QuadraticPotential; }

    /// ∇φ at θ for the exact potential game.
    Vec potential_gradient(const ParamVector& theta) const {
        if (!has_potential()) throw UnsupportedError("game has no potential function");
        return params_.potential->apply(theta.flat());
    }

  private:
    template <class T>
    T value_impl(std::size_t player, std::span<const T> theta) const {
        if (player >= 2) throw DimensionError("player index out of range");
        const std::size_t d = params_.dim_per_player;
        if (theta.size() != 2 * d)
            throw DimensionError("joint parameter length does not match the game");
        T acc = zero_like(theta[0]);
        switch (kind_) {
            case AnalyticKind::Bilinear: {
                const Matrix& m = *params_.coupling;
                for (std::size_t r = 0; r < d; ++r)
                    for (std::size_t c = 0; c < d; ++c)
                        acc += (theta[r] * theta[d + c]) * m(r, c);
                if (player == 1) acc = -acc;
                break;
            }
            case AnalyticKind::QuadraticPotential: {
                const Matrix& p = *params_.potential;
                for (std::size_t r = 0; r < 2 * d; ++r)
                    for (std::size_t c = 0; c < 2 * d; ++c)
                        acc += (theta[r] * theta[c]) * (0.5 * p(r, c));
                break;
            }
            case AnalyticKind::PerturbedHamiltonian: {
                const T cross = theta[0] * theta[1];
                if (player == 0)
                    acc = cross + params_.epsilon * (theta[0] * theta[0] * theta[0]);
                else
                    acc = -cross + params_.epsilon * (theta[1] * theta[1] * theta[1]);
                break;
            }
        }
        return acc;
    }

    AnalyticKind kind_;
    AnalyticParams params_;
};

inline AnalyticGame make_analytic(AnalyticKind kind, AnalyticParams params = {}) {
    for (const auto& m : {params.coupling, params.potential})
        if (m && !m->all_finite()) throw ParameterError("analytic game parameters must be finite");
    if (!std::isfinite(params.epsilon))
        throw ParameterError("analytic game parameters must be finite");
    return AnalyticGame(kind, std::move(params));
}

/// A matrix-game definition file plus its starting condition.
struct GameFile {
    MatrixGame game;
    std::optional<std::vector<Vec>> init_probabilities;
    std::optional<Vec> init_theta;
};

/// Load a game definition: players, action counts, payoff tables (row-major,
/// negated to costs), parametrization, initial probabilities or θ, discounts.
inline GameFile load_game_file(const std::string& path) {
    const KeyValueFile kv = KeyValueFile::parse_file(path);
    const long long players = kv.get_int("", "players");
    if (players != 2)
        throw ConfigError(path + ": only two-player games are supported (players = " +
                          std::to_string(players) + ")");
    const Vec actions_raw = kv.get_double_list("", "actions");
    if (actions_raw.size() != 2) throw ConfigError(path + ": expected two action counts");
    std::vector<std::size_t> actions;
    for (double a : actions_raw) {
        if (a < 1 || a != std::floor(a))
            throw ConfigError(path + ": action counts must be positive integers");
        actions.push_back(static_cast<std::size_t>(a));
    }

    std::vector<Matrix> payoffs;
    for (std::size_t i = 0; i < 2; ++i) {
        const std::string key = "payoffs" + std::to_string(i + 1);
        const Vec flat = kv.get_double_list("", key);
        if (flat.size() != actions[0] * actions[1])
            throw ConfigError(path + ": field '" + key + "' needs " +
                              std::to_string(actions[0] * actions[1]) + " entries");
        Matrix p(actions[0], actions[1]);
        for (std::size_t r = 0; r < actions[0]; ++r)
            for (std::size_t c = 0; c < actions[1]; ++c)
                p(r, c) = flat[r * actions[1] + c];
        payoffs.push_back(std::move(p));
    }

    const Parametrization param =
        parametrization_from_string(kv.get_string("", "parametrization", "boltzmann"));
    Vec discounts = kv.has("", "discounts") ? kv.get_double_list("", "discounts") : Vec{};
    const std::string name = kv.get_string("", "name", "custom");

    GameFile out{MatrixGame::from_payoff_tables(name, actions, payoffs, param,
                                                std::move(discounts)),
                 std::nullopt, std::nullopt};

    const bool has_probs = kv.has("", "init_probs1") || kv.has("", "init_probs2");
    if (has_probs) {
        std::vector<Vec> probs;
        for (std::size_t i = 0; i < 2; ++i)
            probs.push_back(kv.get_double_list("", "init_probs" + std::to_string(i + 1)));
        out.init_probabilities = std::move(probs);
    }
    if (kv.has("", "init_theta")) out.init_theta = kv.get_double_list("", "init_theta");
    return out;
}

}  // namespace nohd
