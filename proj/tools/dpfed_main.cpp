// dpfed: experiment runner and inspection CLI for the differentially
// private federated learning simulator.

#include <cinttypes>
#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpfed/budget.hpp"
#include "dpfed/config.hpp"
#include "dpfed/data.hpp"
#include "dpfed/dp.hpp"
#include "dpfed/federation.hpp"
#include "dpfed/trace.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int cmd_run(const std::string& config_path) {
    const dpfed::FederationConfig cfg = dpfed::load_config(config_path);
    const dpfed::RunResult result = dpfed::run_training(cfg);

    dpfed::write_trace_jsonl(result.trace, cfg.trace_path);
    if (!cfg.trace_csv_path.empty())
        dpfed::write_trace_csv(result.trace, cfg.trace_csv_path);
    dpfed::write_summary(result, cfg.summary_path);

    if (result.failure) {
        std::cerr << "run failed after " << result.rounds_executed
                  << " round(s): " << *result.failure << "\n"
                  << "partial trace preserved in " << cfg.trace_path << "\n";
        return kExitRuntime;
    }
    std::cout << "rounds: " << result.rounds_executed << "\n"
              << "final accuracy: " << result.final_metrics.accuracy << "\n"
              << "epsilon spent: " << result.epsilon_spent << "\n";
    if (result.bound)
        std::cout << "risk bound: " << *result.bound << "\n";
    else
        std::cout << "risk bound: n/a (privacy disabled)\n";
    std::cout << "trace: " << cfg.trace_path << "\n"
              << "summary: " << cfg.summary_path << "\n";
    return kExitOk;
}

int cmd_bound(double sensitivity, double epsilon, double delta, int rounds) {
    const double bound = dpfed::risk_bound(sensitivity, epsilon, delta, rounds);
    std::printf("%.6g\n", bound);
    return kExitOk;
}

int cmd_partition(const std::string& config_path) {
    const dpfed::FederationConfig cfg = dpfed::load_config(config_path);
    const dpfed::Dataset ds = dpfed::detail::build_dataset(cfg);
    dpfed::PartitionPlan plan;
    plan.mode = cfg.partition_mode;
    plan.concentration = cfg.dirichlet_alpha;
    plan.client_count = static_cast<std::size_t>(cfg.client_count);
    plan.seed = cfg.master_seed;
    const auto shards = dpfed::partition(ds, plan);

    std::printf("%-8s %-8s", "client", "samples");
    for (int c = 0; c < ds.class_count; ++c)
        std::printf(" class%-3d", c);
    std::printf("\n");
    std::vector<std::size_t> totals(static_cast<std::size_t>(ds.class_count), 0);
    for (std::size_t i = 0; i < shards.size(); ++i) {
        std::vector<std::size_t> counts(
            static_cast<std::size_t>(ds.class_count), 0);
        for (std::size_t idx : shards[i])
            ++counts[static_cast<std::size_t>(ds.labels[idx])];
        std::printf("%-8zu %-8zu", i, shards[i].size());
        for (std::size_t c = 0; c < counts.size(); ++c) {
            std::printf(" %-8zu", counts[c]);
            totals[c] += counts[c];
        }
        std::printf("\n");
    }
    std::printf("%-8s %-8zu", "total", ds.n());
    for (std::size_t c = 0; c < totals.size(); ++c)
        std::printf(" %-8zu", totals[c]);
    std::printf("\n");
    return kExitOk;
}

int cmd_audit(double scale, std::uint64_t draws, std::uint64_t seed) {
    dpfed::Rng rng(seed);
    const dpfed::NoiseAudit audit =
        dpfed::noise_audit(scale, static_cast<std::size_t>(draws), rng);
    std::printf("mean          %.6g\n", audit.mean);
    std::printf("variance      %.6g\n", audit.variance);
    std::printf("variance/2b^2 %.6g\n",
                audit.variance / (2.0 * scale * scale));
    std::printf("ks_distance   %.6g\n", audit.ks_distance);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"differentially private federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "execute a configured experiment");
    run->add_option("config", config_path, "TOML config file")->required();

    double sensitivity = 1.0, epsilon = 1.0, delta = 1e-5;
    int rounds = 36;
    auto* bound = app.add_subcommand(
        "bound", "evaluate the excess-risk bound for given parameters");
    bound->add_option("--sensitivity", sensitivity, "update sensitivity")
        ->required();
    bound->add_option("--epsilon", epsilon, "total privacy budget")->required();
    bound->add_option("--delta", delta, "failure probability")->required();
    bound->add_option("--rounds", rounds, "number of rounds")->required();

    std::string part_config;
    bool preview = false;
    auto* part = app.add_subcommand(
        "partition", "print per-client class histograms without training");
    part->add_option("config", part_config, "TOML config file")->required();
    part->add_flag("--preview", preview, "preview only (default behavior)");

    double audit_scale = 1.0;
    std::uint64_t audit_draws = 1000000;
    std::uint64_t audit_seed = 0;
    auto* audit = app.add_subcommand(
        "audit", "empirical statistics of the Laplace noise sampler");
    audit->add_option("--scale", audit_scale, "Laplace scale b")->required();
    audit->add_option("--draws", audit_draws, "number of draws")->required();
    audit->add_option("--seed", audit_seed, "generator seed")->required();

    try {
        app.parse(argc, argv);
        if (*run) return cmd_run(config_path);
        if (*bound) return cmd_bound(sensitivity, epsilon, delta, rounds);
        if (*part) return cmd_partition(part_config);
        if (*audit) return cmd_audit(audit_scale, audit_draws, audit_seed);
        return kExitUsage;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const dpfed::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
