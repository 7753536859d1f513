#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "feel/config.hpp"
#include "feel/simulator.hpp"

namespace feel::harness {

/// Fixed CSV header of a run log.
inline constexpr std::string_view kCsvHeader =
    "seed,policy,round,device,eta,upload_s,round_s,cum_s,loss,gap,rho,lambda,bound";

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

void write_run_csv(std::ostream& out, const simulator::RunResult& run);

/// One parsed CSV row. Diagnostics are empty for non-CTM rows.
struct CsvRow {
    std::uint64_t seed = 0;
    std::string policy;
    std::size_t round = 0;
    std::size_t device = 0;
    double eta = 0.0;
    double upload_s = 0.0;
    double round_s = 0.0;
    double cum_s = 0.0;
    double loss = 0.0;
    double gap = 0.0;
    std::optional<double> rho;
    std::optional<double> lambda;
    std::optional<double> bound;

    bool operator==(const CsvRow&) const = default;
};

std::vector<CsvRow> read_run_csv(std::istream& in);

/// Quantile with linear interpolation between order statistics (numpy's
/// default). Infinite entries are allowed and sort last.
double quantile(std::vector<double> values, double q);

struct Spread {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};
Spread spread(const std::vector<double>& values);

/// Loss gap at simulated time `budget`: the last round finishing by then, or
/// the initial gap when none has.
double gap_at_time(const simulator::RunResult& run, double budget);

/// Simulated time when epsilon-accuracy was reached; +inf if never.
double time_to_epsilon(const simulator::RunResult& run);

struct PolicySummary {
    std::string policy;
    std::size_t runs = 0;
    std::size_t converged = 0;
    Spread time_to_epsilon;
    std::vector<Spread> gap_at_checkpoint;
};

struct SuiteSummary {
    std::vector<double> checkpoints_s;
    std::vector<PolicySummary> policies;
};

/// Checkpoints from the config, or 30% / 70% of the median converged run time
/// (median over all runs when none converged).
std::vector<double> resolve_checkpoints(const RunConfig& run,
                                        const std::vector<simulator::RunResult>& results);

SuiteSummary summarize(const std::vector<std::string>& policies,
                       const std::vector<simulator::RunResult>& results,
                       const std::vector<double>& checkpoints);

nlohmann::json to_json(const simulator::RunResult& run);
nlohmann::json to_json(const SuiteSummary& summary);

std::string run_stem(const simulator::RunResult& run);

struct SuiteOutput {
    SuiteSummary summary;
    std::vector<simulator::RunResult> results;
};

/// Runs every (policy, seed) pair on `jobs` worker threads, then writes
/// <policy>_seed<k>.csv, <policy>_seed<k>.json and summary.json under
/// config.run.output_dir from the calling thread.
SuiteOutput run_suite(const ExperimentConfig& config, unsigned jobs = 1);

}  // namespace feel::harness
