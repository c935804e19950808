// Benchmark CLI for Newton-type optimizers on differentiable games.
//
// Subcommands: run (one experiment grid), sweep (learning-rate grid),
// table1 (random-start convergence-ratio study), timing (per-update cost
// versus parameter count), estimators (sampled-gradient runs).
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nohd/nohd.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::int64_t> seed;
    std::string out = "out";
    std::optional<std::int64_t> max_steps;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
    auto* opt = cmd->add_option("--config", flags.config, "experiment config file");
    if (config_required) opt->required();
    cmd->add_option("--seed", flags.seed, "override the config seed");
    cmd->add_option("--out", flags.out, "output directory for CSV files");
    cmd->add_option("--max-steps", flags.max_steps, "override the config step limit");
}

nohd::ExperimentConfig load_config(const CommonFlags& flags) {
    nohd::ExperimentConfig cfg = nohd::ExperimentConfig::from_file(flags.config);
    if (flags.seed) cfg.seed = static_cast<std::uint64_t>(*flags.seed);
    if (flags.max_steps) cfg.max_steps = static_cast<std::size_t>(*flags.max_steps);
    cfg.validate();
    return cfg;
}

nohd::ExperimentConfig default_table1_config(const std::string& game) {
    nohd::ExperimentConfig cfg;
    cfg.game = game;
    cfg.algorithms = nohd::all_algorithms();
    cfg.etas = {0.1, 0.5, 1.0};
    cfg.max_steps = 1000;
    cfg.init.kind = nohd::InitSpec::Kind::RandomNormal;
    cfg.init.sigma = 0.5;
    cfg.init.count = 50;
    return cfg;
}

void print_summaries(const nohd::ExperimentResult& result) {
    for (const nohd::RunSummary& s : result.summaries) {
        std::printf("%-10s %-6s eta=%-5g start=%zu %s steps=%zu %.4f ms/update\n",
                    s.game.c_str(), nohd::to_string(s.algorithm), s.eta, s.start_index,
                    s.converged ? "converged" : "not-converged", s.steps,
                    s.ms_per_update);
    }
    std::printf("summary: %s\n", result.summary_file.string().c_str());
}

int run_experiment_command(const CommonFlags& flags,
                           const std::optional<nohd::Vec>& etas_override,
                           bool force_sampled, std::optional<std::int64_t> batch,
                           std::optional<std::int64_t> horizon) {
    nohd::ExperimentConfig cfg = load_config(flags);
    if (etas_override) cfg.etas = *etas_override;
    if (force_sampled && !cfg.sampled) cfg.sampled = nohd::SampledMode{};
    if (batch) cfg.sampled->batch = static_cast<std::size_t>(*batch);
    if (horizon) cfg.sampled->horizon = static_cast<std::size_t>(*horizon);
    cfg.validate();
    const nohd::ExperimentResult result = nohd::run_experiment(cfg, flags.out);
    print_summaries(result);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Newton-type optimization benchmark for differentiable games"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    auto* run_cmd = app.add_subcommand("run", "run the experiment grid of a config");
    add_common(run_cmd, run_flags, /*config_required=*/true);

    CommonFlags sweep_flags;
    std::vector<double> sweep_etas;
    auto* sweep_cmd =
        app.add_subcommand("sweep", "run a config over an explicit learning-rate grid");
    add_common(sweep_cmd, sweep_flags, /*config_required=*/true);
    sweep_cmd->add_option("--etas", sweep_etas, "learning rates to sweep")
        ->delimiter(',')
        ->required();

    CommonFlags table_flags;
    std::string table_game = "mp";
    auto* table_cmd = app.add_subcommand(
        "table1", "random-start convergence-ratio study (mean steps per algorithm)");
    add_common(table_cmd, table_flags, /*config_required=*/false);
    table_cmd->add_option("--game", table_game, "built-in game when no config is given");

    CommonFlags timing_flags;
    std::vector<std::size_t> dims = {4, 16, 36, 64, 100, 144};
    std::size_t reps = 20;
    auto* timing_cmd =
        app.add_subcommand("timing", "per-update wall time versus parameter count");
    timing_cmd->add_option("--dims", dims, "joint parameter sizes")->delimiter(',');
    timing_cmd->add_option("--reps", reps, "repetitions per measurement");
    timing_cmd->add_option("--seed", timing_flags.seed, "random seed");
    timing_cmd->add_option("--out", timing_flags.out, "output directory");

    CommonFlags est_flags;
    std::optional<std::int64_t> est_batch;
    std::optional<std::int64_t> est_horizon;
    auto* est_cmd =
        app.add_subcommand("estimators", "run a config with sampled gradients");
    add_common(est_cmd, est_flags, /*config_required=*/true);
    est_cmd->add_option("--batch", est_batch, "trajectories per update");
    est_cmd->add_option("--horizon", est_horizon, "steps per trajectory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run_cmd->parsed())
            return run_experiment_command(run_flags, std::nullopt, false, std::nullopt,
                                          std::nullopt);
        if (sweep_cmd->parsed())
            return run_experiment_command(sweep_flags, nohd::Vec(sweep_etas.begin(),
                                                                 sweep_etas.end()),
                                          false, std::nullopt, std::nullopt);
        if (est_cmd->parsed())
            return run_experiment_command(est_flags, std::nullopt, true, est_batch,
                                          est_horizon);
        if (table_cmd->parsed()) {
            nohd::ExperimentConfig cfg = table_flags.config.empty()
                                             ? default_table1_config(table_game)
                                             : load_config(table_flags);
            if (table_flags.seed) cfg.seed = static_cast<std::uint64_t>(*table_flags.seed);
            if (table_flags.max_steps)
                cfg.max_steps = static_cast<std::size_t>(*table_flags.max_steps);
            const auto rows = nohd::table1_study(cfg);
            std::filesystem::create_directories(table_flags.out);
            nohd::write_table1_csv(std::filesystem::path(table_flags.out) / "table1.csv",
                                   cfg.game, rows);
            for (const nohd::Table1Row& r : rows)
                std::printf("%-6s best_eta=%-5g mean_steps=%-9.2f ratio=%.3f%s\n",
                            nohd::to_string(r.algorithm), r.best_eta, r.mean_steps,
                            r.ratio,
                            r.unconverged_runs
                                ? (" unconverged=" + std::to_string(r.unconverged_runs))
                                      .c_str()
                                : "");
            return 0;
        }
        if (timing_cmd->parsed()) {
            const std::uint64_t seed =
                timing_flags.seed ? static_cast<std::uint64_t>(*timing_flags.seed) : 0;
            const auto rows = nohd::timing_study(dims, reps, seed);
            std::filesystem::create_directories(timing_flags.out);
            nohd::write_timing_csv(
                std::filesystem::path(timing_flags.out) / "timing.csv", rows);
            for (const nohd::TimingRow& r : rows) {
                std::printf("%4zu", r.dim);
                for (std::size_t i = 0; i < r.mean_ms.size(); ++i)
                    std::printf(" %s=%.4f", nohd::to_string(r.algorithms[i]),
                                r.mean_ms[i]);
                std::printf("\n");
            }
            return 0;
        }
    } catch (const nohd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const nohd::UnsupportedError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const nohd::Error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
