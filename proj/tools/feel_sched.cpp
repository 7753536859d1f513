// feel-sched: run, validate and verify federated edge learning scheduling experiments.

#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "feel/config.hpp"
#include "feel/error.hpp"
#include "feel/oracles.hpp"
#include "feel/suite.hpp"

namespace {

using namespace feel;

int cmd_run(const std::string& config_path, const std::string& policies, const std::string& seeds,
            const std::string& out_dir, unsigned jobs) {
    harness::ExperimentConfig config = harness::load_config(config_path);
    if (!policies.empty()) {
        config.run.policies.clear();
        for (auto p : harness::parse_policy_list(policies)) {
            config.run.policies.emplace_back(scheduler::policy_name(p));
        }
    }
    if (!seeds.empty()) config.run.seeds = harness::parse_seed_list(seeds);
    if (!out_dir.empty()) config.run.output_dir = out_dir;

    const auto output = harness::run_suite(config, jobs);
    std::cout << "wrote " << output.results.size() << " runs to " << config.run.output_dir << "\n";
    std::cout << std::left << std::setw(9) << "policy" << std::setw(11) << "converged"
              << std::setw(16) << "median_time_s";
    for (double t : output.summary.checkpoints_s) {
        std::ostringstream label;
        label << "gap@" << std::setprecision(4) << t << "s";
        std::cout << std::setw(18) << label.str();
    }
    std::cout << "\n";
    for (const auto& p : output.summary.policies) {
        std::cout << std::setw(9) << p.policy << std::setw(11)
                  << (std::to_string(p.converged) + "/" + std::to_string(p.runs)) << std::setw(16)
                  << std::setprecision(6) << p.time_to_epsilon.median;
        for (const auto& g : p.gap_at_checkpoint) std::cout << std::setw(18) << g.median;
        std::cout << "\n";
    }
    return 0;
}

int cmd_validate(const std::string& config_path) {
    const auto config = harness::load_config(config_path);
    const auto setup = harness::build_setup(config);
    std::cout << "config ok: " << setup->devices.size() << " devices, task " << config.task.type
              << " (dim " << setup->task->dimension() << ", smoothness " << setup->task->smoothness()
              << ", strong convexity " << setup->task->strong_convexity() << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated edge learning device-scheduling simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string policies;
    std::string seeds;
    std::string out_dir;
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());

    auto* run = app.add_subcommand("run", "Run every (policy, seed) pair and write logs");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--policies", policies, "Comma-separated subset of ctm,ia,ca,ica,uniform");
    run->add_option("--seeds", seeds, "Seed range \"0..19\" or list \"1,2,3\"");
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "Parse and validate a config");
    validate->add_option("--config", validate_path, "Experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);

    std::string oracle_name;
    auto* oracle = app.add_subcommand("oracle", "Run a brute-force verification");
    oracle->add_option("name", oracle_name, "grid-search | monte-carlo-q | unbiasedness")->required();

    app.add_subcommand("default-config", "Print the built-in default config");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config_path, policies, seeds, out_dir, jobs);
        if (*validate) return cmd_validate(validate_path);
        if (app.got_subcommand("default-config")) {
            std::cout << harness::serialize_config(harness::default_config());
            return 0;
        }
        if (*oracle) return feel::oracles::run_named(oracle_name, std::cout) ? 0 : 1;
    } catch (const feel::harness::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
