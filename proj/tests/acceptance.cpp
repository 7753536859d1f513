// Acceptance gate: one PASS/FAIL line per criterion, exit status 0 only when all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "feel/channel.hpp"
#include "feel/config.hpp"
#include "feel/oracles.hpp"
#include "feel/scheduler.hpp"
#include "feel/suite.hpp"

using namespace feel;
using learning::Vector;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
    if (!ok) ++failures;
    std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

template <typename... Args>
std::string fmt(Args&&... args) {
    std::ostringstream ss;
    ss << std::setprecision(4);
    (ss << ... << args);
    return ss.str();
}

// A random scheduling instance drawn around the default deployment: real
// channel draws from the default devices and random local gradient norms.
struct Instance {
    std::vector<std::size_t> sizes;
    std::vector<double> norms;
    channel::ChannelRealization channel;
    scheduler::BoundParams bound;
    double future_time = 0.0;

    [[nodiscard]] scheduler::DeviceState state() const { return {norms, sizes}; }
};

Instance random_instance(std::size_t m_count, Rng& rng) {
    static const auto config = harness::default_config();
    static const auto all_devices = harness::build_devices(config);
    static const auto comm = harness::build_comm(config);
    Instance in;
    std::vector<channel::DeviceProfile> devices;
    for (std::size_t m = 0; m < m_count; ++m) {
        devices.push_back(all_devices[uniform_index(rng, all_devices.size())]);
        in.sizes.push_back(50 + uniform_index(rng, 400));
        in.norms.push_back(0.05 + 2.0 * uniform01(rng));
    }
    in.channel = channel::sample_channels(devices, comm, rng);
    in.channel.eligible.assign(m_count, true);
    in.future_time = channel::expected_future_time(devices, comm);
    in.bound.smoothness = 0.5 + uniform01(rng);
    in.bound.strong_convexity = 0.5;
    in.bound.epsilon = config.run.epsilon;
    in.bound.schedule = {config.schedule.chi, config.schedule.nu};
    in.bound.round = uniform_index(rng, 20'000);
    return in;
}

void closed_form_vs_grid() {
    Timer timer;
    Rng rng = make_stream(1001, Stream::task);
    int ok = 0;
    double worst = -kInf;
    for (int inst = 0; inst < 50; ++inst) {
        const Instance in = random_instance(3, rng);
        const auto state = in.state();
        const auto sol = scheduler::ctm_policy(state, in.channel, in.bound, in.future_time);
        auto f = [&](std::span<const double> p) {
            return scheduler::p2_objective(p, state, in.channel.upload_time, in.bound, in.future_time);
        };
        const auto grid = oracles::simplex_grid_min_3(f, 1000);
        const double excess = f(sol.distribution.p) - grid.value;
        worst = std::max(worst, excess);
        if (excess <= 1e-6) ++ok;
    }
    const double secs = timer.seconds();
    report(ok == 50 && secs < 60.0, "closed-form optimality vs simplex grid",
           fmt(ok, "/50 instances within 1e-6 of the 1e-3 grid minimum (worst excess ", worst, "), ", secs, " s"));
}

void kkt_residual() {
    Rng rng = make_stream(1002, Stream::task);
    int ok = 0;
    double worst = 0.0;
    for (int inst = 0; inst < 1000; ++inst) {
        const Instance in = random_instance(2 + uniform_index(rng, 7), rng);
        const auto a = in.state().importance();
        const auto sol = scheduler::ctm_policy(in.state(), in.channel, in.bound, in.future_time);
        const double r = sol.rho;
        bool good = true;
        for (std::size_t m = 0; m < a.size(); ++m) {
            const double p = sol.distribution.p[m];
            if (!(p > 0.0)) continue;
            const double b = in.channel.upload_time[m];
            const double resid = std::abs(r * r * a[m] * a[m] / (p * p) - b - sol.lambda) /
                                 std::max(std::abs(sol.lambda), b);
            worst = std::max(worst, resid);
            good = good && resid <= 1e-6;
        }
        if (good) ++ok;
    }
    report(ok == 1000, "stationarity residual", fmt(ok, "/1000 instances, worst relative residual ", worst));
}

void bisection_normalisation() {
    Rng rng = make_stream(1003, Stream::task);
    int ok = 0;
    int total = 0;
    double worst_sum = 0.0;
    double worst_f = 0.0;
    auto check = [&](const std::vector<double>& a, const std::vector<double>& b, double r) {
        const auto sol = scheduler::ctm_solve(a, b, {}, r);
        const auto& p = sol.distribution.p;
        const double s = std::accumulate(p.begin(), p.end(), 0.0);
        // Sum of the unnormalised closed form at the returned multiplier, with
        // b_m + lambda taken as (b_m - min b) + shift.
        const double b_min = *std::min_element(b.begin(), b.end());
        double f = 0.0;
        for (std::size_t m = 0; m < a.size(); ++m) f += r * a[m] / std::sqrt(b[m] - b_min + sol.shift);
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        worst_f = std::max(worst_f, std::abs(f - 1.0));
        ++total;
        if (std::abs(s - 1.0) < 1e-9 && std::abs(f - 1.0) < 1e-9) ++ok;
    };
    for (int inst = 0; inst < 1000; ++inst) {
        const Instance in = random_instance(2 + uniform_index(rng, 7), rng);
        const auto sol = scheduler::ctm_policy(in.state(), in.channel, in.bound, in.future_time);
        check(in.state().importance(), in.channel.upload_time, sol.rho);
    }
    for (int inst = 0; inst < 1000; ++inst) {
        const std::size_t m_count = 2 + uniform_index(rng, 7);
        std::vector<double> a(m_count), b(m_count);
        const double base = std::pow(10.0, 4.0 * uniform01(rng) - 2.0);
        for (std::size_t m = 0; m < m_count; ++m) {
            a[m] = 0.01 + uniform01(rng);
            b[m] = base * std::pow(10.0, 6.0 * uniform01(rng));
        }
        b[0] = base;
        b[1] = base * 1e6;
        check(a, b, std::pow(10.0, 6.0 * uniform01(rng) - 4.0));
    }
    report(ok == total, "bisection normalisation",
           fmt(ok, "/", total, " instances (incl. 1000 with b spread over 6 decades); worst |sum p - 1| ",
               worst_sum, ", worst |F(lambda*) - 1| ", worst_f));
}

void limit_behaviour() {
    Rng rng = make_stream(1004, Stream::task);
    int ia_ok = 0;
    int fast_ok = 0;
    double worst_l1 = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
        Instance in = random_instance(2 + uniform_index(rng, 5), rng);
        const auto ia = scheduler::importance_aware_policy(in.state());

        scheduler::BoundParams tight = in.bound;
        tight.epsilon *= 1e-6;
        const auto big = scheduler::ctm_policy(in.state(), in.channel, tight, in.future_time);
        double l1 = 0.0;
        for (std::size_t m = 0; m < ia.p.size(); ++m) l1 += std::abs(big.distribution.p[m] - ia.p[m]);
        worst_l1 = std::max(worst_l1, l1);
        if (l1 < 1e-3) ++ia_ok;

        scheduler::BoundParams loose = in.bound;
        loose.epsilon *= 1e6;
        const auto small = scheduler::ctm_policy(in.state(), in.channel, loose, in.future_time);
        const auto& p = small.distribution.p;
        const auto& t = in.channel.upload_time;
        const auto top = std::max_element(p.begin(), p.end()) - p.begin();
        const auto fastest = std::min_element(t.begin(), t.end()) - t.begin();
        if (top == fastest) ++fast_ok;
    }
    report(ia_ok == 100, "limit: tiny epsilon gives importance-aware",
           fmt(ia_ok, "/100 instances with L1 < 1e-3 (worst ", worst_l1, ")"));
    report(fast_ok == 100, "limit: huge epsilon favours the fastest upload",
           fmt(fast_ok, "/100 instances with argmax at min upload time"));
}

void quadrature_vs_monte_carlo() {
    Timer timer;
    const auto config = harness::default_config();
    const auto devices = harness::build_devices(config);
    const auto comm = harness::build_comm(config);
    bool all = true;
    std::ostringstream detail;
    detail << std::setprecision(3);
    for (std::size_t m = 0; m < devices.size(); ++m) {
        Rng rng = make_stream(1005, Stream::channel, m);
        const double q = channel::q_factor(devices[m], comm);
        const auto mc = oracles::monte_carlo_q(devices[m], comm, 1'000'000, rng);
        const double z = std::abs(q - mc.mean) / mc.std_error;
        all = all && z <= 3.0;
        detail << "dev" << m << " z=" << z << " ";
    }
    const double secs = timer.seconds();
    detail << "(" << secs << " s)";
    report(all && secs < 30.0, "quadrature vs 1e6-sample Monte Carlo", detail.str());
}

void unbiased_aggregation() {
    const auto config = harness::default_config();
    const auto devices = harness::build_devices(config);
    const auto comm = harness::build_comm(config);
    Rng rng = make_stream(1006, Stream::batch);
    const std::size_t count = devices.size();
    std::vector<std::size_t> sizes;
    for (const auto& d : devices) sizes.push_back(d.dataset_size);
    const auto ch = channel::sample_channels(devices, comm, rng);

    std::vector<Vector> base;
    for (std::size_t m = 0; m < count; ++m) {
        Vector g(5);
        for (Eigen::Index i = 0; i < 5; ++i) g(i) = standard_normal(rng);
        base.push_back(g);
    }
    auto norms_of = [](const std::vector<Vector>& gs) {
        std::vector<double> n;
        for (const auto& g : gs) n.push_back(g.norm());
        return n;
    };

    scheduler::BoundParams bound;
    bound.smoothness = 1.0;
    bound.strong_convexity = 1.0;
    bound.epsilon = config.run.epsilon;
    bound.schedule = {config.schedule.chi, config.schedule.nu};
    bound.round = 500;
    const double future = channel::expected_future_time(devices, comm);

    const std::vector<scheduler::Policy> policies{scheduler::Policy::uniform, scheduler::Policy::importance_aware,
                                                  scheduler::Policy::channel_aware, scheduler::Policy::ica,
                                                  scheduler::Policy::ctm};
    bool all = true;
    std::ostringstream detail;
    detail << std::setprecision(3);
    for (auto policy : policies) {
        const auto norms = norms_of(base);
        const scheduler::DeviceState state{norms, sizes};
        std::vector<double> p;
        switch (policy) {
            case scheduler::Policy::uniform: p = scheduler::uniform_policy(count).p; break;
            case scheduler::Policy::importance_aware: p = scheduler::importance_aware_policy(state).p; break;
            case scheduler::Policy::channel_aware: p = scheduler::channel_aware_policy(ch.rate).p; break;
            case scheduler::Policy::ica: p = scheduler::ica_policy(state, ch.upload_time, 0.01).p; break;
            case scheduler::Policy::ctm: p = scheduler::ctm_policy(state, ch, bound, future).distribution.p; break;
        }
        // Devices the policy never schedules only contribute when their gradient is zero.
        std::vector<Vector> grads = base;
        for (std::size_t m = 0; m < count; ++m) {
            if (!(p[m] > 0.0)) grads[m].setZero();
        }
        Vector truth = Vector::Zero(5);
        double n = 0.0;
        for (auto s : sizes) n += static_cast<double>(s);
        for (std::size_t m = 0; m < count; ++m) truth += (static_cast<double>(sizes[m]) / n) * grads[m];

        const auto est = oracles::monte_carlo_scaled_upload(grads, sizes, p, 100'000, rng);
        double worst = 0.0;
        bool ok = true;
        for (Eigen::Index i = 0; i < truth.size(); ++i) {
            const double diff = std::abs(est.mean(i) - truth(i));
            if (est.std_error(i) > 0.0) {
                worst = std::max(worst, diff / est.std_error(i));
                ok = ok && diff <= 3.0 * est.std_error(i);
            } else {
                ok = ok && diff <= 1e-12 * std::max(1.0, std::abs(truth(i)));
            }
        }
        all = all && ok;
        detail << scheduler::policy_name(policy) << " max|z|=" << worst << " ";
    }
    report(all, "unbiased aggregation at 1e5 draws", detail.str());
}

void gradient_correctness() {
    auto config = harness::default_config();
    const auto quadratic = harness::build_task(config);
    config.task.type = "logistic";
    const auto logistic = harness::build_task(config);
    bool all = true;
    std::ostringstream detail;
    detail << std::setprecision(3);
    for (const auto& [name, task] : {std::pair{"quadratic", quadratic}, std::pair{"logistic", logistic}}) {
        Rng rng = make_stream(1007, Stream::task);
        double worst = 0.0;
        const auto f = [&](const Vector& w) { return task->loss(w); };
        for (int k = 0; k < 10; ++k) {
            Vector w(static_cast<Eigen::Index>(task->dimension()));
            for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = 2.0 * standard_normal(rng);
            const Vector exact = task->gradient(w);
            const Vector fd = oracles::finite_difference_gradient(f, w, 1e-5);
            worst = std::max(worst, (exact - fd).norm() / std::max(exact.norm(), 1e-12));
        }
        all = all && worst < 1e-5;
        detail << name << " worst rel err " << worst << " ";
    }
    report(all, "gradients vs central differences", detail.str());
}

void end_to_end() {
    Timer timer;
    auto config = harness::default_config();
    const fs::path out = fs::temp_directory_path() / "feel_acceptance_e2e";
    fs::remove_all(out);
    config.run.output_dir = out.string();
    config.run.seeds.resize(20);
    std::iota(config.run.seeds.begin(), config.run.seeds.end(), 0);
    const auto output = harness::run_suite(config, std::max(1u, std::thread::hardware_concurrency()));
    const double secs = timer.seconds();

    const harness::PolicySummary* ctm = nullptr;
    for (const auto& p : output.summary.policies) {
        if (p.policy == "ctm") ctm = &p;
    }
    if (ctm == nullptr) {
        report(false, "end-to-end time to epsilon", "no ctm runs");
        return;
    }
    bool time_ok = true;
    bool gap_ok = true;
    const std::size_t late = output.summary.checkpoints_s.size() - 1;
    std::ostringstream times, gaps;
    times << std::setprecision(5);
    gaps << std::setprecision(4);
    for (const auto& p : output.summary.policies) {
        times << p.policy << "=" << p.time_to_epsilon.median << " ";
        gaps << p.policy << "=" << p.gap_at_checkpoint[late].median << " ";
        if (&p == ctm) continue;
        time_ok = time_ok && ctm->time_to_epsilon.median <= p.time_to_epsilon.median;
        gap_ok = gap_ok && ctm->gap_at_checkpoint[late].median < p.gap_at_checkpoint[late].median;
    }
    report(time_ok && secs < 600.0, "end-to-end median time to epsilon (20 seeds)",
           fmt(times.str(), "(", secs, " s)"));
    report(gap_ok, "end-to-end late-checkpoint median gap",
           fmt("at ", output.summary.checkpoints_s[late], " s: ", gaps.str()));
    fs::remove_all(out);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void determinism() {
    const fs::path root = fs::temp_directory_path() / "feel_acceptance_det";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path config_path = root / "config.json";
    {
        std::ofstream cfg(config_path);
        cfg << harness::serialize_config(harness::default_config());
    }
    bool ok = true;
    for (const char* run : {"a", "b"}) {
        const std::string cmd = std::string("\"") + FEEL_SCHED_BINARY + "\" run --config \"" + config_path.string() +
                                "\" --seeds 0..2 --jobs 2 --out \"" + (root / run).string() + "\" > /dev/null";
        ok = ok && std::system(cmd.c_str()) == 0;
    }
    std::size_t compared = 0;
    if (ok) {
        for (const auto& e : fs::directory_iterator(root / "a")) {
            if (e.path().extension() != ".csv") continue;
            ++compared;
            ok = ok && slurp(e.path()) == slurp(root / "b" / e.path().filename());
        }
    }
    ok = ok && compared == 15;
    report(ok, "determinism across two CLI invocations", fmt(compared, " CSV files compared byte for byte"));
    fs::remove_all(root);
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<void()>>> checks{
        {"grid", closed_form_vs_grid},       {"kkt", kkt_residual},
        {"bisection", bisection_normalisation}, {"limits", limit_behaviour},
        {"quadrature", quadrature_vs_monte_carlo}, {"unbiased", unbiased_aggregation},
        {"gradients", gradient_correctness}, {"end-to-end", end_to_end},
        {"determinism", determinism}};
    for (const auto& [name, check] : checks) {
        try {
            check();
        } catch (const std::exception& e) {
            report(false, name, std::string("threw: ") + e.what());
        }
    }
    std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
