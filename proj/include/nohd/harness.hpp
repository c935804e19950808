#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "nohd/config.hpp"
#include "nohd/errors.hpp"
#include "nohd/estim.hpp"
#include "nohd/games.hpp"
#include "nohd/gamecore.hpp"
#include "nohd/optim.hpp"
#include "nohd/rng.hpp"

namespace nohd {

/// A run converges at the first step s whose next `window` recorded points
/// all have every player's action distribution within eps (max norm) of the
/// reference equilibrium.
struct ConvergenceRule {
    double eps = 0.01;
    std::size_t window = 10;
};

inline std::pair<bool, std::size_t> convergence_check(
    const std::vector<std::vector<Vec>>& prob_trace,
    const std::vector<Vec>& reference, const ConvergenceRule& rule) {
    const std::size_t len = prob_trace.size();
    if (len < rule.window) return {false, 0};

    std::vector<char> within(len, 0);
    for (std::size_t t = 0; t < len; ++t) {
        bool ok = true;
        for (std::size_t i = 0; i < reference.size() && ok; ++i) {
            const Vec& p = prob_trace[t][i];
            for (std::size_t a = 0; a < reference[i].size(); ++a)
                if (std::abs(p[a] - reference[i][a]) >= rule.eps) {
                    ok = false;
                    break;
                }
        }
        within[t] = ok ? 1 : 0;
    }

    std::size_t streak = 0;
    for (std::size_t t = 0; t < len; ++t) {
        streak = within[t] ? streak + 1 : 0;
        if (streak >= rule.window) return {true, t + 1 - rule.window};
    }
    return {false, 0};
}

struct InitSpec {
    enum class Kind { Probabilities, Theta, RandomNormal };
    Kind kind = Kind::RandomNormal;
    std::vector<Vec> probabilities;
    Vec theta;
    double sigma = 0.5;
    std::size_t count = 1;
};

struct SampledMode {
    std::size_t batch = 300;
    std::size_t horizon = 1;
};

struct ExperimentConfig {
    std::string game = "mp";
    Parametrization parametrization = Parametrization::Boltzmann;
    std::vector<Algorithm> algorithms;
    Vec etas = {0.1, 0.5, 1.0};
    InitSpec init;
    std::optional<SampledMode> sampled;
    std::size_t max_steps = 300;
    ConvergenceRule convergence;
    std::uint64_t seed = 0;
    NohdConfig nohd;

    void validate() const {
        if (algorithms.empty()) throw ConfigError("empty algorithm list");
        if (etas.empty()) throw ConfigError("empty learning-rate list");
        for (double e : etas)
            if (!(e > 0.0)) throw ConfigError("learning rates must be positive");
        if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
        if (init.kind == InitSpec::Kind::RandomNormal) {
            if (!(init.sigma > 0.0)) throw ConfigError("random init sigma must be positive");
            if (init.count < 1) throw ConfigError("random init count must be at least 1");
        }
        if (init.kind == InitSpec::Kind::Probabilities && init.probabilities.empty())
            throw ConfigError("probability init requires p1/p2 lists");
        if (init.kind == InitSpec::Kind::Theta && init.theta.empty())
            throw ConfigError("theta init requires a theta list");
        if (sampled && (sampled->batch < 1 || sampled->horizon < 1))
            throw ConfigError("sampled mode needs batch >= 1 and horizon >= 1");
        if (!(nohd.m > 0.0)) throw ConfigError("PT-inverse floor m must be positive");
    }

    static ExperimentConfig from_file(const std::string& path) {
        const KeyValueFile kv = KeyValueFile::parse_file(path);
        ExperimentConfig cfg;
        cfg.game = kv.get_string("", "game", cfg.game);
        cfg.parametrization = parametrization_from_string(
            kv.get_string("", "parametrization", "boltzmann"));
        if (!kv.has("", "algorithms"))
            throw ConfigError(path + ": missing field 'algorithms'");
        cfg.algorithms.clear();
        for (const std::string& name : kv.get_string_list("", "algorithms"))
            cfg.algorithms.push_back(algorithm_from_string(name));
        if (kv.has("", "etas")) cfg.etas = kv.get_double_list("", "etas");
        cfg.max_steps = static_cast<std::size_t>(kv.get_int("", "max_steps", 300));
        cfg.seed = static_cast<std::uint64_t>(kv.get_int("", "seed", 0));

        const std::string mode = kv.get_string("", "mode", "exact");
        if (mode == "sampled") {
            SampledMode sm;
            sm.batch = static_cast<std::size_t>(kv.get_int("sampled", "batch", 300));
            sm.horizon = static_cast<std::size_t>(kv.get_int("sampled", "horizon", 1));
            cfg.sampled = sm;
        } else if (mode != "exact") {
            throw ConfigError(path + ": mode must be 'exact' or 'sampled', got '" +
                              mode + "'");
        }

        if (kv.has_section("init")) {
            const std::string kind = kv.get_string("init", "kind", "random");
            if (kind == "probabilities") {
                cfg.init.kind = InitSpec::Kind::Probabilities;
                cfg.init.probabilities = {kv.get_double_list("init", "p1"),
                                          kv.get_double_list("init", "p2")};
            } else if (kind == "theta") {
                cfg.init.kind = InitSpec::Kind::Theta;
                cfg.init.theta = kv.get_double_list("init", "theta");
            } else if (kind == "random") {
                cfg.init.kind = InitSpec::Kind::RandomNormal;
                cfg.init.sigma = kv.get_double("init", "sigma", 0.5);
                cfg.init.count = static_cast<std::size_t>(kv.get_int("init", "count", 1));
            } else {
                throw ConfigError(path + ": unknown init kind '" + kind + "'");
            }
        }

        cfg.convergence.eps = kv.get_double("convergence", "eps", 0.01);
        cfg.convergence.window =
            static_cast<std::size_t>(kv.get_int("convergence", "window", 10));

        cfg.nohd.m = kv.get_double("nohd", "m", 0.03);
        cfg.nohd.ham_grad_floor = kv.get_double("nohd", "ham_grad_floor", 1e-10);
        cfg.nohd.apply_eta_to_hamiltonian_branch =
            kv.get_bool("nohd", "apply_eta_to_hamiltonian", true);
        cfg.nohd.fixed_point_tol = kv.get_double("nohd", "fixed_point_tol", 1e-8);
        cfg.nohd.branch_noise_scale =
            kv.get_double("nohd", "branch_noise_scale", 2.0);

        cfg.validate();
        return cfg;
    }
};

struct ResolvedGame {
    MatrixGame game;
    InitSpec init;
};

/// Resolve the config's game name to a built-in or a game definition file.
/// The config's init spec wins over one stored in the game file.
inline ResolvedGame resolve_game(const ExperimentConfig& cfg) {
    try {
        return {MatrixGame::by_name(cfg.game, cfg.parametrization), cfg.init};
    } catch (const UnsupportedError&) {
        // Not a built-in; treat as a file path.
    }
    GameFile file = load_game_file(cfg.game);
    InitSpec init = cfg.init;
    const bool config_has_explicit_init =
        cfg.init.kind != InitSpec::Kind::RandomNormal || cfg.init.count > 1;
    if (!config_has_explicit_init) {
        if (file.init_probabilities) {
            init.kind = InitSpec::Kind::Probabilities;
            init.probabilities = *file.init_probabilities;
        } else if (file.init_theta) {
            init.kind = InitSpec::Kind::Theta;
            init.theta = *file.init_theta;
        }
    }
    return {std::move(file.game), std::move(init)};
}

inline std::vector<ParamVector> make_starts(const MatrixGame& game, const InitSpec& init,
                                            std::uint64_t seed) {
    switch (init.kind) {
        case InitSpec::Kind::Probabilities:
            return {game.theta_from_probabilities(init.probabilities)};
        case InitSpec::Kind::Theta:
            return {ParamVector(game.block_dims(), init.theta)};
        case InitSpec::Kind::RandomNormal: {
            std::vector<ParamVector> starts;
            const std::size_t total = game.dim();
            for (std::size_t k = 0; k < init.count; ++k) {
                std::mt19937_64 rng(mix_seed(seed, 0x5ee0 + k));
                std::normal_distribution<double> normal(0.0, init.sigma);
                Vec flat(total);
                for (double& v : flat) v = normal(rng);
                starts.push_back(ParamVector(game.block_dims(), std::move(flat)));
            }
            return starts;
        }
    }
    throw ConfigError("unhandled init kind");
}

struct RunSummary {
    std::string game;
    Algorithm algorithm = Algorithm::Nohd;
    double eta = 0.0;
    std::uint64_t seed = 0;
    std::size_t start_index = 0;
    bool converged = false;
    std::size_t steps = 0;
    double ms_per_update = 0.0;
    bool domain_exit = false;
};

struct ExperimentResult {
    std::vector<RunSummary> summaries;
    std::vector<std::filesystem::path> step_files;
    std::filesystem::path summary_file;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt_eta(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

inline std::vector<std::vector<Vec>> probability_trace(const MatrixGame& game,
                                                       const Trace& trace) {
    std::vector<std::vector<Vec>> probs;
    probs.reserve(trace.steps.size());
    for (const StepRecord& rec : trace.steps) {
        const ParamVector theta(game.block_dims(), rec.theta);
        probs.push_back(game.action_probabilities(theta));
    }
    return probs;
}

inline void write_step_csv(const std::filesystem::path& path, const Trace& trace,
                           const std::vector<std::vector<Vec>>& probs) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write CSV file: " + path.string());
    out << "step,player,action,probability,xi_norm,branch,cos_s,cos_a\n";
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        const StepRecord& rec = trace.steps[t];
        const char* branch = rec.branch ? to_string(*rec.branch) : "-";
        for (std::size_t i = 0; i < probs[t].size(); ++i)
            for (std::size_t a = 0; a < probs[t][i].size(); ++a)
                out << t << ',' << i << ',' << a << ',' << fmt_double(probs[t][i][a])
                    << ',' << fmt_double(rec.xi_norm) << ',' << branch << ','
                    << fmt_double(rec.cos_s) << ',' << fmt_double(rec.cos_a) << '\n';
    }
}

inline void write_summary_csv(const std::filesystem::path& path,
                              const std::vector<RunSummary>& summaries) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write CSV file: " + path.string());
    out << "game,algorithm,eta,seed,converged,steps,ms_per_update\n";
    for (const RunSummary& s : summaries)
        out << s.game << ',' << to_string(s.algorithm) << ',' << fmt_eta(s.eta) << ','
            << s.seed << ',' << (s.converged ? 1 : 0) << ',' << s.steps << ','
            << fmt_double(s.ms_per_update) << '\n';
}

struct SingleRun {
    Trace trace;
    std::vector<std::vector<Vec>> probs;
    RunSummary summary;
};

inline SingleRun run_single(const ExperimentConfig& cfg, const MatrixGame& game,
                            const std::optional<std::vector<Vec>>& reference,
                            Algorithm alg, double eta, const ParamVector& start,
                            std::size_t start_index, std::uint64_t run_seed) {
    RunOptions opts;
    opts.nohd = cfg.nohd;
    opts.nohd.eta = eta;
    opts.hyper.eta = eta;

    Evaluator evaluator;
    if (cfg.sampled) {
        evaluator = sampled_evaluator(game, cfg.sampled->batch, cfg.sampled->horizon,
                                      run_seed);
    } else {
        const MatrixGame* g = &game;
        evaluator = [g](const ParamVector& th, std::size_t) { return evaluate(*g, th); };
    }

    SingleRun out;
    out.trace = run_with(evaluator, alg, start, cfg.max_steps, opts);
    out.probs = probability_trace(game, out.trace);

    out.summary.game = game.name();
    out.summary.algorithm = alg;
    out.summary.eta = eta;
    out.summary.seed = run_seed;
    out.summary.start_index = start_index;
    out.summary.ms_per_update = out.trace.seconds_per_update() * 1e3;
    out.summary.domain_exit = out.trace.domain_exit_step.has_value();
    out.summary.converged = false;
    out.summary.steps = cfg.max_steps;
    if (reference) {
        const auto [ok, step] = convergence_check(out.probs, *reference, cfg.convergence);
        if (ok) {
            out.summary.converged = true;
            out.summary.steps = step;
        }
    }
    return out;
}

}  // namespace detail

/// Run the config's full (algorithm × η × start) grid, writing one per-step
/// CSV per run plus a summary CSV. Deterministic given the config seed.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::filesystem::path& out_dir) {
    cfg.validate();
    const ResolvedGame resolved = resolve_game(cfg);
    const std::vector<ParamVector> starts =
        make_starts(resolved.game, resolved.init, cfg.seed);

    std::optional<std::vector<Vec>> reference;
    try {
        reference = nash_reference(resolved.game);
    } catch (const UnsupportedError&) {
        // Custom game without a known equilibrium; runs are reported without
        // a convergence verdict.
    }

    std::filesystem::create_directories(out_dir);
    ExperimentResult result;
    std::size_t run_index = 0;
    for (Algorithm alg : cfg.algorithms) {
        for (double eta : cfg.etas) {
            for (std::size_t k = 0; k < starts.size(); ++k) {
                const std::uint64_t run_seed = mix_seed(cfg.seed, run_index);
                detail::SingleRun run = detail::run_single(
                    cfg, resolved.game, reference, alg, eta, starts[k], k, run_seed);

                const std::filesystem::path step_file =
                    out_dir / (resolved.game.name() + "_" + to_string(alg) + "_eta" +
                               detail::fmt_eta(eta) + "_start" + std::to_string(k) +
                               ".csv");
                detail::write_step_csv(step_file, run.trace, run.probs);
                result.step_files.push_back(step_file);
                result.summaries.push_back(std::move(run.summary));
                ++run_index;
            }
        }
    }
    result.summary_file = out_dir / "summary.csv";
    detail::write_summary_csv(result.summary_file, result.summaries);
    return result;
}

struct Table1Row {
    Algorithm algorithm = Algorithm::Nohd;
    double best_eta = 0.0;
    double mean_steps = 0.0;
    double ratio = 0.0;
    std::size_t unconverged_runs = 0;  // at the best learning rate
};

/// Random-start convergence study: per algorithm, the mean steps-to-converge
/// over the shared starts at its best learning rate, normalized by the
/// worst algorithm's mean. Runs that never converge count at max_steps and
/// are flagged.
inline std::vector<Table1Row> table1_study(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.init.kind != InitSpec::Kind::RandomNormal)
        throw ConfigError("table1 study requires a random-normal init spec");
    const ResolvedGame resolved = resolve_game(cfg);
    const std::vector<ParamVector> starts =
        make_starts(resolved.game, resolved.init, cfg.seed);
    const std::vector<Vec> reference = nash_reference(resolved.game);

    std::vector<Table1Row> rows;
    std::size_t run_index = 0;
    for (Algorithm alg : cfg.algorithms) {
        Table1Row row;
        row.algorithm = alg;
        row.mean_steps = std::numeric_limits<double>::infinity();
        for (double eta : cfg.etas) {
            double total = 0.0;
            std::size_t unconverged = 0;
            for (std::size_t k = 0; k < starts.size(); ++k) {
                const std::uint64_t run_seed = mix_seed(cfg.seed, run_index++);
                const detail::SingleRun run =
                    detail::run_single(cfg, resolved.game, reference, alg, eta,
                                       starts[k], k, run_seed);
                total += static_cast<double>(run.summary.steps);
                if (!run.summary.converged) ++unconverged;
            }
            const double mean = total / static_cast<double>(starts.size());
            if (mean < row.mean_steps) {
                row.mean_steps = mean;
                row.best_eta = eta;
                row.unconverged_runs = unconverged;
            }
        }
        rows.push_back(row);
    }

    double max_mean = 0.0;
    for (const Table1Row& r : rows) max_mean = std::max(max_mean, r.mean_steps);
    for (Table1Row& r : rows) r.ratio = r.mean_steps / max_mean;
    return rows;
}

inline void write_table1_csv(const std::filesystem::path& path, const std::string& game,
                             const std::vector<Table1Row>& rows) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write CSV file: " + path.string());
    out << "game,algorithm,best_eta,mean_steps,ratio,unconverged_runs\n";
    for (const Table1Row& r : rows)
        out << game << ',' << to_string(r.algorithm) << ',' << detail::fmt_eta(r.best_eta)
            << ',' << detail::fmt_double(r.mean_steps) << ','
            << detail::fmt_double(r.ratio) << ',' << r.unconverged_runs << '\n';
}

/// Dense random quadratic game used by the timing study: V_i = ½θᵀP_iθ + b_iᵀθ
/// with per-player dense symmetric P_i, so the Jacobian is a dense random
/// matrix and every algorithm exercises its full linear-algebra cost.
class SyntheticSmoothGame : public Game {
  public:
    SyntheticSmoothGame(std::size_t total_dim, std::uint64_t seed) {
        if (total_dim < 2 || total_dim % 2 != 0)
            throw ParameterError("synthetic game dimension must be even and >= 2");
        dim_ = total_dim;
        std::mt19937_64 rng(splitmix64(seed));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t i = 0; i < 2; ++i) {
            Matrix p(dim_, dim_);
            for (std::size_t r = 0; r < dim_; ++r)
                for (std::size_t c = r; c < dim_; ++c) {
                    const double v = normal(rng);
                    p(r, c) = v;
                    p(c, r) = v;
                }
            hessians_.push_back(std::move(p));
            Vec b(dim_);
            for (double& v : b) v = normal(rng);
            linear_.push_back(std::move(b));
        }
    }

    std::size_t players() const override { return 2; }
    std::vector<std::size_t> block_dims() const override {
        return {dim_ / 2, dim_ / 2};
    }
    double value(std::size_t player, std::span<const double> theta) const override {
        return value_impl(player, theta);
    }
    Dual2 value(std::size_t player, std::span<const Dual2> theta) const override {
        return value_impl(player, theta);
    }

  private:
    template <class T>
    T value_impl(std::size_t player, std::span<const T> theta) const {
        const Matrix& p = hessians_[player];
        const Vec& b = linear_[player];
        T acc = zero_like(theta[0]);
        for (std::size_t r = 0; r < dim_; ++r) {
            T row = zero_like(theta[0]);
            for (std::size_t c = 0; c < dim_; ++c) row += theta[c] * p(r, c);
            acc += theta[r] * (0.5 * row);
            acc += theta[r] * b[r];
        }
        return acc;
    }

    std::size_t dim_ = 0;
    std::vector<Matrix> hessians_;
    std::vector<Vec> linear_;
};

struct TimingRow {
    std::size_t dim = 0;
    std::vector<Algorithm> algorithms;
    Vec mean_ms;  // aligned with algorithms
};

/// Mean wall time of one full learning update (evaluation, decomposition,
/// update direction) per algorithm on the synthetic game of each size.
inline std::vector<TimingRow> timing_study(const std::vector<std::size_t>& dims,
                                           std::size_t repetitions = 20,
                                           std::uint64_t seed = 0) {
    if (repetitions < 1) throw ParameterError("timing needs at least one repetition");
    using clock = std::chrono::steady_clock;
    std::vector<TimingRow> rows;
    for (std::size_t dim : dims) {
        const SyntheticSmoothGame game(dim, mix_seed(seed, dim));
        std::vector<ParamVector> points;
        for (std::size_t rep = 0; rep < repetitions; ++rep) {
            std::mt19937_64 rng(mix_seed(seed, dim * 1000 + rep));
            std::normal_distribution<double> normal(0.0, 1.0);
            Vec flat(dim);
            for (double& v : flat) v = normal(rng);
            points.push_back(ParamVector(game.block_dims(), std::move(flat)));
        }

        TimingRow row;
        row.dim = dim;
        for (Algorithm alg : all_algorithms()) {
            NohdConfig nohd_cfg;
            BaselineHyper hyper;
            double total = 0.0;
            // One untimed update first so page faults and allocator warm-up
            // do not land in the first measured repetition.
            for (std::size_t rep = 0; rep <= repetitions; ++rep) {
                const auto started = clock::now();
                const GameEval eval = evaluate(game, points[rep % repetitions]);
                const Decomposition dec = decompose(eval);
                Vec direction;
                if (alg == Algorithm::Nohd)
                    direction = nohd_step(eval, dec, nohd_cfg).direction;
                else
                    direction = baseline_step(alg, eval, dec, hyper);
                if (rep > 0)
                    total +=
                        std::chrono::duration<double>(clock::now() - started).count();
                if (!all_finite(direction))
                    throw NumericalError("timing update produced non-finite direction");
            }
            row.algorithms.push_back(alg);
            row.mean_ms.push_back(total / static_cast<double>(repetitions) * 1e3);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_timing_csv(const std::filesystem::path& path,
                             const std::vector<TimingRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write CSV file: " + path.string());
    out << "dim";
    if (!rows.empty())
        for (Algorithm alg : rows.front().algorithms) out << ',' << to_string(alg);
    out << '\n';
    for (const TimingRow& r : rows) {
        out << r.dim;
        for (double ms : r.mean_ms) out << ',' << detail::fmt_double(ms);
        out << '\n';
    }
}

}  // namespace nohd
