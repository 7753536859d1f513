#include "feel/oracles.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "feel/config.hpp"
#include "feel/error.hpp"
#include "feel/scheduler.hpp"

namespace feel::oracles {

using learning::Vector;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Running mean / variance (Welford).
struct Accumulator {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    [[nodiscard]] Estimate estimate() const {
        const double var = n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
        return {mean, std::sqrt(var / static_cast<double>(n))};
    }
};

const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

bool grid_search_report(std::ostream& out) {
    Rng rng = make_stream(11, Stream::task);
    bool all = true;
    for (int inst = 0; inst < 10; ++inst) {
        std::vector<double> a(3), b(3);
        for (int m = 0; m < 3; ++m) {
            a[m] = 0.05 + uniform01(rng);
            b[m] = std::exp(4.0 * uniform01(rng) - 2.0);
        }
        const double rho = std::exp(2.0 * uniform01(rng) - 1.0);
        // rho^2 sum a^2/p + sum p b is the look-ahead objective with A eta^2 T folded into rho^2.
        auto objective = [&](std::span<const double> p) {
            double v = 0.0;
            for (int m = 0; m < 3; ++m) {
                if (!(p[m] > 0.0)) return kInf;
                v += rho * rho * a[m] * a[m] / p[m] + p[m] * b[m];
            }
            return v;
        };
        const auto grid = simplex_grid_min_3(objective, 1000);
        const auto sol = scheduler::ctm_solve(a, b, {}, rho);
        const double closed = objective(sol.distribution.p);
        const bool ok = closed <= grid.value + 1e-6;
        all = all && ok;
        out << "grid-search instance " << inst << ": closed-form " << std::setprecision(12) << closed
            << " grid " << grid.value << " " << verdict(ok) << "\n";
    }
    return all;
}

bool monte_carlo_q_report(std::ostream& out) {
    const auto config = harness::default_config();
    const auto devices = harness::build_devices(config);
    const auto comm = harness::build_comm(config);
    bool all = true;
    for (std::size_t m = 0; m < devices.size(); ++m) {
        Rng rng = make_stream(100 + m, Stream::channel);
        const double q = channel::q_factor(devices[m], comm);
        const Estimate mc = monte_carlo_q(devices[m], comm, 1'000'000, rng);
        const double z = std::abs(q - mc.mean) / mc.std_error;
        const bool ok = z <= 3.0;
        all = all && ok;
        out << "monte-carlo-q device " << m << ": quadrature " << std::setprecision(10) << q
            << " monte-carlo " << mc.mean << " +/- " << mc.std_error << " (z=" << std::setprecision(3)
            << z << ") " << verdict(ok) << "\n";
    }
    return all;
}

bool unbiasedness_report(std::ostream& out) {
    Rng rng = make_stream(7, Stream::batch);
    const std::vector<std::size_t> sizes{100, 200, 300, 400};
    std::vector<Vector> grads;
    for (int m = 0; m < 4; ++m) {
        Vector g(3);
        for (int i = 0; i < 3; ++i) g(i) = standard_normal(rng);
        grads.push_back(g);
    }
    std::vector<double> norms;
    for (const auto& g : grads) norms.push_back(g.norm());
    const scheduler::DeviceState state{norms, sizes};

    std::vector<double> upload{3.0, 1.0, 2.0, 4.0};
    const auto ia = scheduler::importance_aware_policy(state);
    const auto ctm = scheduler::ctm_solve(state.importance(), upload, {}, 0.5);
    const std::vector<std::pair<std::string, std::vector<double>>> cases{
        {"uniform", scheduler::uniform_policy(4).p}, {"ia", ia.p}, {"ctm", ctm.distribution.p}};

    bool all = true;
    Vector truth = Vector::Zero(3);
    for (std::size_t m = 0; m < 4; ++m) truth += (static_cast<double>(sizes[m]) / 1000.0) * grads[m];
    for (const auto& [name, p] : cases) {
        const auto est = monte_carlo_scaled_upload(grads, sizes, p, 100'000, rng);
        double worst = 0.0;
        for (Eigen::Index i = 0; i < truth.size(); ++i) {
            worst = std::max(worst, std::abs(est.mean(i) - truth(i)) / est.std_error(i));
        }
        const bool ok = worst <= 3.0;
        all = all && ok;
        out << "unbiasedness " << name << ": max |z| = " << std::setprecision(3) << worst << " "
            << verdict(ok) << "\n";
    }
    return all;
}

}  // namespace

GridMinimum simplex_grid_min_3(const std::function<double(std::span<const double>)>& f,
                               std::size_t resolution) {
    GridMinimum best{{}, kInf};
    const double step = 1.0 / static_cast<double>(resolution);
    double p[3];
    for (std::size_t i = 0; i <= resolution; ++i) {
        for (std::size_t j = 0; i + j <= resolution; ++j) {
            p[0] = static_cast<double>(i) * step;
            p[1] = static_cast<double>(j) * step;
            p[2] = static_cast<double>(resolution - i - j) * step;
            const double v = f(std::span<const double>(p, 3));
            if (v < best.value) best = {{p[0], p[1], p[2]}, v};
        }
    }
    return best;
}

Estimate monte_carlo_q(const channel::DeviceProfile& profile, const channel::CommParams& comm,
                       std::size_t samples, Rng& rng) {
    // Normalised gain u = |h|^2 / sigma^2 ~ Exp(1); condition on u >= threshold.
    const double k = profile.transmit_power_w * profile.channel_variance / comm.noise_power_w;
    const double u0 = comm.gain_threshold;
    const double mass = std::exp(-u0);
    Accumulator acc;
    for (std::size_t i = 0; i < samples; ++i) {
        const double u = u0 + exponential(rng, 1.0);
        acc.add(mass / std::log2(1.0 + k * u));
    }
    return acc.estimate();
}

Estimate monte_carlo_round_time(std::span<const channel::DeviceProfile> devices,
                                const channel::CommParams& comm, std::size_t samples, Rng& rng) {
    double total = 0.0;
    for (const auto& d : devices) total += static_cast<double>(d.dataset_size);
    Accumulator acc;
    for (std::size_t i = 0; i < samples; ++i) {
        const double u = uniform01(rng) * total;
        std::size_t m = 0;
        double cum = static_cast<double>(devices[0].dataset_size);
        while (u >= cum && m + 1 < devices.size()) cum += static_cast<double>(devices[++m].dataset_size);
        const auto& d = devices[m];
        const double gain = exponential(rng, d.channel_variance);
        if (gain < comm.gain_threshold * d.channel_variance) {
            acc.add(0.0);
            continue;
        }
        const double rate = std::log2(1.0 + d.transmit_power_w * gain / comm.noise_power_w);
        acc.add(static_cast<double>(comm.bits_per_param) * static_cast<double>(comm.num_params) /
                (comm.bandwidth_hz * rate));
    }
    return acc.estimate();
}

VectorEstimate monte_carlo_scaled_upload(std::span<const Vector> grads, std::span<const std::size_t> sizes,
                                         std::span<const double> p, std::size_t draws, Rng& rng) {
    const Eigen::Index dim = grads.front().size();
    double n = 0.0;
    for (auto s : sizes) n += static_cast<double>(s);
    Vector sum = Vector::Zero(dim);
    Vector sum_sq = Vector::Zero(dim);
    for (std::size_t i = 0; i < draws; ++i) {
        const double u = uniform01(rng);
        std::size_t m = 0;
        double cum = 0.0;
        std::size_t last = 0;
        for (; m < p.size(); ++m) {
            if (p[m] <= 0.0) continue;
            last = m;
            cum += p[m];
            if (u < cum) break;
        }
        if (m == p.size()) m = last;
        const Vector x = (static_cast<double>(sizes[m]) / (n * p[m])) * grads[m];
        sum += x;
        sum_sq += x.cwiseProduct(x);
    }
    const double d = static_cast<double>(draws);
    VectorEstimate out;
    out.mean = sum / d;
    const Vector var = (sum_sq / d - out.mean.cwiseProduct(out.mean)) * (d / (d - 1.0));
    out.std_error = (var.cwiseMax(0.0) / d).cwiseSqrt();
    return out;
}

Vector finite_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& w,
                                  double h) {
    Vector g(w.size());
    Vector probe = w;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        probe(i) = w(i) + h;
        const double up = f(probe);
        probe(i) = w(i) - h;
        const double down = f(probe);
        probe(i) = w(i);
        g(i) = (up - down) / (2.0 * h);
    }
    return g;
}

std::vector<std::string> oracle_names() { return {"grid-search", "monte-carlo-q", "unbiasedness"}; }

bool run_named(const std::string& name, std::ostream& out) {
    if (name == "grid-search") return grid_search_report(out);
    if (name == "monte-carlo-q") return monte_carlo_q_report(out);
    if (name == "unbiasedness") return unbiasedness_report(out);
    throw InvalidArgument("unknown oracle '" + name + "' (expected grid-search, monte-carlo-q or unbiasedness)");
}

}  // namespace feel::oracles
