#include "feel/suite.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <system_error>
#include <thread>

namespace feel::harness {

namespace fs = std::filesystem;
using nlohmann::json;
using simulator::RunResult;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        if (s == "inf") return kInf;
        throw std::runtime_error("bad number '" + s + "' in run CSV");
    }
    return v;
}

std::optional<double> parse_optional(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return parse_double(s);
}

void append_optional(std::string& line, const std::optional<double>& v) {
    line += ',';
    if (v) line += format_double(*v);
}

json spread_json(const Spread& s) { return {{"median", s.median}, {"q1", s.q1}, {"q3", s.q3}}; }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

void write_run_csv(std::ostream& out, const RunResult& run) {
    out << kCsvHeader << '\n';
    const std::string policy(scheduler::policy_name(run.policy));
    std::string line;
    for (const auto& r : run.logs) {
        line.clear();
        line += std::to_string(run.seed);
        line += ',';
        line += policy;
        line += ',' + std::to_string(r.round);
        line += ',' + std::to_string(r.device);
        line += ',' + format_double(r.eta);
        line += ',' + format_double(r.upload_s);
        line += ',' + format_double(r.round_s);
        line += ',' + format_double(r.cum_s);
        line += ',' + format_double(r.loss);
        line += ',' + format_double(r.gap);
        append_optional(line, r.rho);
        append_optional(line, r.lambda);
        append_optional(line, r.bound);
        out << line << '\n';
    }
}

std::vector<CsvRow> read_run_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) {
        throw std::runtime_error("run CSV has an unexpected header");
    }
    std::vector<CsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 13) throw std::runtime_error("run CSV row has " + std::to_string(f.size()) + " fields");
        CsvRow r;
        r.seed = std::stoull(f[0]);
        r.policy = f[1];
        r.round = std::stoull(f[2]);
        r.device = std::stoull(f[3]);
        r.eta = parse_double(f[4]);
        r.upload_s = parse_double(f[5]);
        r.round_s = parse_double(f[6]);
        r.cum_s = parse_double(f[7]);
        r.loss = parse_double(f[8]);
        r.gap = parse_double(f[9]);
        r.rho = parse_optional(f[10]);
        r.lambda = parse_optional(f[11]);
        r.bound = parse_optional(f[12]);
        rows.push_back(std::move(r));
    }
    return rows;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = h - static_cast<double>(lo);
    if (frac == 0.0 || values[lo] == values[hi]) return values[lo];
    if (std::isinf(values[hi])) return kInf;
    return values[lo] + frac * (values[hi] - values[lo]);
}

Spread spread(const std::vector<double>& values) {
    return {quantile(values, 0.5), quantile(values, 0.25), quantile(values, 0.75)};
}

double gap_at_time(const RunResult& run, double budget) {
    double gap = run.initial_gap;
    for (const auto& r : run.logs) {
        if (r.cum_s > budget) break;
        gap = r.gap;
    }
    return gap;
}

double time_to_epsilon(const RunResult& run) { return run.converged ? run.total_time : kInf; }

std::vector<double> resolve_checkpoints(const RunConfig& run, const std::vector<RunResult>& results) {
    if (!run.checkpoints_s.empty()) return run.checkpoints_s;
    // Converged runs stop at epsilon, so a snapshot after most of them have
    // stopped only compares gaps that are all below epsilon. Anchor on the
    // typical converged run; runs that never converge stop at max_rounds and
    // only say something about the cap.
    std::vector<double> times;
    for (const auto& r : results) {
        if (r.converged && std::isfinite(r.total_time)) times.push_back(r.total_time);
    }
    if (times.empty()) {
        for (const auto& r : results) {
            if (std::isfinite(r.total_time)) times.push_back(r.total_time);
        }
    }
    const double anchor = times.empty() ? 0.0 : quantile(times, 0.5);
    return {0.3 * anchor, 0.7 * anchor};
}

SuiteSummary summarize(const std::vector<std::string>& policies, const std::vector<RunResult>& results,
                       const std::vector<double>& checkpoints) {
    SuiteSummary summary;
    summary.checkpoints_s = checkpoints;
    for (const auto& name : policies) {
        PolicySummary ps;
        ps.policy = name;
        std::vector<double> times;
        std::vector<std::vector<double>> gaps(checkpoints.size());
        for (const auto& r : results) {
            if (scheduler::policy_name(r.policy) != name) continue;
            ++ps.runs;
            if (r.converged) ++ps.converged;
            times.push_back(time_to_epsilon(r));
            for (std::size_t c = 0; c < checkpoints.size(); ++c) gaps[c].push_back(gap_at_time(r, checkpoints[c]));
        }
        if (ps.runs > 0) {
            ps.time_to_epsilon = spread(times);
            for (const auto& g : gaps) ps.gap_at_checkpoint.push_back(spread(g));
        }
        summary.policies.push_back(std::move(ps));
    }
    return summary;
}

json to_json(const RunResult& run) {
    const double final_gap = run.logs.empty() ? run.initial_gap : run.logs.back().gap;
    return json{{"policy", std::string(scheduler::policy_name(run.policy))},
                {"seed", run.seed},
                {"converged", run.converged},
                {"stalled", run.stalled},
                {"rounds", run.rounds},
                {"total_time_s", run.total_time},
                {"time_to_epsilon_s", time_to_epsilon(run)},
                {"initial_gap", run.initial_gap},
                {"final_gap", final_gap}};
}

json to_json(const SuiteSummary& summary) {
    json policies = json::array();
    for (const auto& p : summary.policies) {
        json gaps = json::array();
        for (std::size_t c = 0; c < p.gap_at_checkpoint.size(); ++c) {
            json g = spread_json(p.gap_at_checkpoint[c]);
            g["time_s"] = summary.checkpoints_s[c];
            gaps.push_back(std::move(g));
        }
        policies.push_back({{"policy", p.policy},
                            {"runs", p.runs},
                            {"converged", p.converged},
                            {"time_to_epsilon_s", spread_json(p.time_to_epsilon)},
                            {"gap_at_checkpoint", gaps}});
    }
    return json{{"checkpoints_s", summary.checkpoints_s}, {"policies", policies}};
}

std::string run_stem(const RunResult& run) {
    return std::string(scheduler::policy_name(run.policy)) + "_seed" + std::to_string(run.seed);
}

SuiteOutput run_suite(const ExperimentConfig& config, unsigned jobs) {
    const auto setup = build_setup(config);
    std::vector<scheduler::Policy> policies;
    for (const auto& name : config.run.policies) policies.push_back(scheduler::parse_policy(name));

    struct Job {
        scheduler::Policy policy;
        std::uint64_t seed;
    };
    std::vector<Job> queue;
    for (auto p : policies) {
        for (auto s : config.run.seeds) queue.push_back({p, s});
    }

    std::vector<RunResult> results(queue.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < queue.size(); i = next++) {
            try {
                results[i] = simulator::run_experiment(setup, queue[i].policy, queue[i].seed);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(queue.size())));
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    SuiteOutput out;
    out.summary = summarize(config.run.policies, results, resolve_checkpoints(config.run, results));

    const fs::path dir(config.run.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    for (const auto& r : results) {
        std::ostringstream csv;
        write_run_csv(csv, r);
        write_text(dir / (run_stem(r) + ".csv"), csv.str());
        write_text(dir / (run_stem(r) + ".json"), to_json(r).dump(2) + "\n");
    }
    write_text(dir / "summary.json", to_json(out.summary).dump(2) + "\n");
    out.results = std::move(results);
    return out;
}

}  // namespace feel::harness
