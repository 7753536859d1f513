#include "feel/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>

#include "feel/error.hpp"

namespace feel::scheduler {

namespace {

constexpr double kSumTolerance = 1.0e-9;
constexpr int kMaxBracketDoublings = 200;
constexpr int kMaxBracketHalvings = 2000;
constexpr int kMaxBisections = 400;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t argmax_lowest(std::span<const double> scores) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < scores.size(); ++m) {
        if (scores[m] > scores[best]) best = m;
    }
    return best;
}

SchedulingDistribution one_hot(std::size_t m, std::size_t count, Policy policy) {
    SchedulingDistribution dist{std::vector<double>(count, 0.0), policy};
    dist.p[m] = 1.0;
    return dist;
}

void check_state(const DeviceState& state) {
    if (state.grad_norms.size() != state.sizes.size()) {
        throw InvalidArgument("grad_norms and sizes must have one entry per device");
    }
    if (state.grad_norms.empty()) throw InvalidArgument("at least one device");
}

}  // namespace

std::string_view policy_name(Policy policy) {
    switch (policy) {
        case Policy::uniform: return "uniform";
        case Policy::importance_aware: return "ia";
        case Policy::channel_aware: return "ca";
        case Policy::ica: return "ica";
        case Policy::ctm: return "ctm";
    }
    return "unknown";
}

Policy parse_policy(std::string_view name) {
    for (Policy p : {Policy::uniform, Policy::importance_aware, Policy::channel_aware, Policy::ica,
                     Policy::ctm}) {
        if (policy_name(p) == name) return p;
    }
    throw InvalidArgument("unknown policy '" + std::string(name) +
                          "' (expected uniform, ia, ca, ica or ctm)");
}

void SchedulingDistribution::validate() const {
    if (p.empty()) throw InvalidArgument("empty scheduling distribution");
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("probabilities must be >= 0");
        sum += v;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw InvalidArgument("probabilities sum to " + std::to_string(sum));
    }
}

std::vector<double> DeviceState::importance() const {
    check_state(*this);
    const double n = static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
    std::vector<double> a(sizes.size());
    for (std::size_t m = 0; m < a.size(); ++m) {
        a[m] = static_cast<double>(sizes[m]) / n * grad_norms[m];
    }
    return a;
}

void BoundParams::validate() const {
    if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
    if (!(smoothness > 0.0)) throw InvalidArgument("smoothness must be > 0");
    schedule.validate();
}

double BoundParams::lookahead_weight() const {
    return smoothness * (static_cast<double>(round) + 1.0 + schedule.nu) / (2.0 * epsilon);
}

SchedulingDistribution uniform_policy(std::size_t num_devices) {
    if (num_devices == 0) throw InvalidArgument("at least one device");
    return {std::vector<double>(num_devices, 1.0 / static_cast<double>(num_devices)),
            Policy::uniform};
}

SchedulingDistribution importance_aware_policy(const DeviceState& state) {
    const std::vector<double> a = state.importance();
    const double total = std::accumulate(a.begin(), a.end(), 0.0);
    if (!(total > 0.0)) throw StarvationError("all local gradients are zero");
    SchedulingDistribution dist{std::vector<double>(a.size()), Policy::importance_aware};
    for (std::size_t m = 0; m < a.size(); ++m) dist.p[m] = a[m] / total;
    return dist;
}

SchedulingDistribution channel_aware_policy(std::span<const double> rates) {
    if (rates.empty()) throw InvalidArgument("at least one device");
    return one_hot(argmax_lowest(rates), rates.size(), Policy::channel_aware);
}

SchedulingDistribution ica_policy(const DeviceState& state, std::span<const double> upload_times,
                                  double beta) {
    if (!(beta >= 0.0)) throw InvalidArgument("beta must be >= 0");
    const std::vector<double> a = state.importance();
    if (upload_times.size() != a.size()) throw InvalidArgument("one upload time per device");
    std::vector<double> score(a.size());
    for (std::size_t m = 0; m < a.size(); ++m) {
        score[m] = std::isfinite(upload_times[m]) ? a[m] - beta * upload_times[m] : -kInf;
    }
    return one_hot(argmax_lowest(score), a.size(), Policy::ica);
}

double rho(const BoundParams& bound, double future_time) {
    bound.validate();
    const double t = static_cast<double>(bound.round);
    const double nu = bound.schedule.nu;
    const double chi = bound.schedule.chi;
    if (!(t + nu > 0.0)) throw InvalidArgument("t + nu must be > 0");
    return std::sqrt(bound.smoothness * (t + 1.0 + nu) * chi * chi /
                     (2.0 * (t + nu) * (t + nu) * bound.epsilon) * future_time);
}

CtmSolution ctm_solve(std::span<const double> importance, std::span<const double> upload_times,
                      std::span<const bool> eligible, double rho_t) {
    const std::size_t count = importance.size();
    if (upload_times.size() != count || (!eligible.empty() && eligible.size() != count)) {
        throw InvalidArgument("ctm_solve inputs must have one entry per device");
    }
    if (!(rho_t > 0.0) || !std::isfinite(rho_t)) {
        throw NumericError("rho_t must be positive and finite, got " + std::to_string(rho_t));
    }

    std::vector<std::size_t> support;
    for (std::size_t m = 0; m < count; ++m) {
        const bool ok = importance[m] > 0.0 && std::isfinite(upload_times[m]) &&
                        upload_times[m] >= 0.0 && (eligible.empty() || eligible[m]);
        if (ok) support.push_back(m);
    }
    if (support.empty()) throw StarvationError("no eligible device with a nonzero gradient");

    // lambda = s - b_min with s > 0 keeps b_m + lambda = (b_m - b_min) + s exact
    // for the fastest device, however far lambda sits from zero.
    double b_min = kInf;
    double a_sum = 0.0;
    for (std::size_t m : support) {
        b_min = std::min(b_min, upload_times[m]);
        a_sum += importance[m];
    }
    auto total = [&](double s) {
        double f = 0.0;
        for (std::size_t m : support) f += rho_t * importance[m] / std::sqrt(upload_times[m] - b_min + s);
        return f;
    };

    double hi = std::max(1.0, (rho_t * a_sum) * (rho_t * a_sum));
    int doublings = 0;
    while (!(total(hi) < 1.0)) {
        if (++doublings > kMaxBracketDoublings) {
            throw NumericError("ctm: no upper bracket for lambda after 200 doublings");
        }
        hi *= 2.0;
    }
    double lo = hi;
    int halvings = 0;
    do {
        if (++halvings > kMaxBracketHalvings) throw NumericError("ctm: no lower bracket for lambda");
        lo *= 0.5;
    } while (!(total(lo) > 1.0) && lo > 0.0);
    if (!(lo > 0.0)) throw NumericError("ctm: lower bracket underflowed");

    // Bisect in log space; s spans many decades when b_m are spread out.
    double s = std::sqrt(lo) * std::sqrt(hi);
    for (int i = 0; i < kMaxBisections; ++i) {
        s = std::sqrt(lo) * std::sqrt(hi);
        if (s <= lo || s >= hi) break;
        const double f = total(s);
        if (f == 1.0) break;
        (f > 1.0 ? lo : hi) = s;
    }

    CtmSolution out;
    out.rho = rho_t;
    out.lambda = s - b_min;
    out.shift = s;
    out.distribution.policy = Policy::ctm;
    out.distribution.p.assign(count, 0.0);
    double sum = 0.0;
    for (std::size_t m : support) {
        const double p = rho_t * importance[m] / std::sqrt(upload_times[m] - b_min + s);
        out.distribution.p[m] = p;
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw NumericError("ctm: bisection ended with sum p = " + std::to_string(sum));
    }
    for (double& p : out.distribution.p) p /= sum;
    return out;
}

CtmSolution ctm_policy(const DeviceState& state, const channel::ChannelRealization& channel,
                       const BoundParams& bound, double future_time) {
    const std::vector<double> a = state.importance();
    if (channel.size() != a.size()) throw InvalidArgument("channel realization size mismatch");
    const double rho_t = rho(bound, future_time);

    bool any_eligible = false;
    bool any_finite = false;
    for (std::size_t m = 0; m < a.size(); ++m) {
        if (a[m] > 0.0 && std::isfinite(channel.upload_time[m])) {
            any_finite = true;
            if (channel.eligible[m]) any_eligible = true;
        }
    }
    if (!any_finite) throw StarvationError("no device with a nonzero gradient and finite upload time");

    // std::vector<bool> has no contiguous storage; copy into a plain buffer.
    auto mask = std::make_unique<bool[]>(a.size());
    for (std::size_t m = 0; m < a.size(); ++m) mask[m] = any_eligible ? bool(channel.eligible[m]) : true;

    CtmSolution out = ctm_solve(a, channel.upload_time, std::span<const bool>(mask.get(), a.size()), rho_t);
    out.mask_lifted = !any_eligible;
    return out;
}

double variance_term(std::span<const double> p, const DeviceState& state) {
    const std::vector<double> a = state.importance();
    if (p.size() != a.size()) throw InvalidArgument("distribution size mismatch");
    double v = 0.0;
    for (std::size_t m = 0; m < a.size(); ++m) {
        if (a[m] == 0.0) continue;
        if (!(p[m] > 0.0)) return kInf;
        v += a[m] * a[m] / p[m];
    }
    return v;
}

double p2_objective(std::span<const double> p, const DeviceState& state,
                    std::span<const double> upload_times, const BoundParams& bound,
                    double future_time) {
    if (upload_times.size() != p.size()) throw InvalidArgument("one upload time per device");
    const double eta = bound.schedule.eta(bound.round);
    const double rounds = bound.lookahead_weight() * eta * eta * future_time * variance_term(p, state);
    double current = 0.0;
    for (std::size_t m = 0; m < p.size(); ++m) {
        if (p[m] > 0.0) current += p[m] * upload_times[m];
    }
    return rounds + current;
}

RoundsBound remaining_rounds_bound(std::span<const double> p, const DeviceState& state,
                                   const BoundParams& bound, double g_proxy,
                                   double global_grad_norm) {
    bound.validate();
    const double mu = bound.strong_convexity;
    const double chi = bound.schedule.chi;
    bound.schedule.require_contraction(mu);

    const double t = static_cast<double>(bound.round);
    const double nu = bound.schedule.nu;
    const double eta = bound.schedule.eta(bound.round);
    const double ell = bound.smoothness;
    const double eps = bound.epsilon;

    RoundsBound out;
    out.variance_part = ell * (t + 1.0 + nu) * eta * eta / (2.0 * eps) * variance_term(p, state);
    out.constant_part = ell * chi * chi * g_proxy * g_proxy / (2.0 * eps * (2.0 * mu * chi - 1.0)) +
                        (t + nu + 1.0) * (1.0 / (2.0 * mu) - eta) / eps * global_grad_norm *
                            global_grad_norm -
                        nu - t - 1.0;
    return out;
}

std::size_t sample_device(const SchedulingDistribution& dist, Rng& rng) {
    if (dist.p.empty()) throw InvalidArgument("empty scheduling distribution");
    const double u = uniform01(rng);
    double cum = 0.0;
    std::size_t last_positive = dist.p.size();
    for (std::size_t m = 0; m < dist.p.size(); ++m) {
        if (!(dist.p[m] > 0.0)) continue;
        cum += dist.p[m];
        last_positive = m;
        if (u < cum) return m;
    }
    if (last_positive == dist.p.size()) throw InvalidArgument("distribution has no positive mass");
    return last_positive;
}

}  // namespace feel::scheduler
