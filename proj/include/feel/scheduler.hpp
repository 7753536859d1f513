#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "feel/channel.hpp"
#include "feel/learning.hpp"
#include "feel/random.hpp"

namespace feel::scheduler {

enum class Policy { uniform, importance_aware, channel_aware, ica, ctm };

/// Config names: "uniform" | "ia" | "ca" | "ica" | "ctm".
std::string_view policy_name(Policy policy);
Policy parse_policy(std::string_view name);

struct SchedulingDistribution {
    std::vector<double> p;
    Policy policy = Policy::uniform;

    [[nodiscard]] std::size_t size() const { return p.size(); }
    /// Throws InvalidArgument unless p >= 0 and |sum p - 1| <= 1e-9.
    void validate() const;
};

/// Per-round inputs shared by the gradient-aware policies.
/// a_m = (n_m / n) * ||g_m|| is the device's importance.
struct DeviceState {
    std::span<const double> grad_norms;
    std::span<const std::size_t> sizes;

    [[nodiscard]] std::vector<double> importance() const;
};

struct BoundParams {
    double smoothness = 1.0;        // ell
    double strong_convexity = 1.0;  // mu
    double epsilon = 1.0e-3;
    learning::StepSchedule schedule;
    std::size_t round = 0;

    void validate() const;
    /// A(t) = ell (t + 1 + nu) / (2 epsilon).
    [[nodiscard]] double lookahead_weight() const;
};

SchedulingDistribution uniform_policy(std::size_t num_devices);

/// p_m proportional to n_m ||g_m||. Throws StarvationError if every product is zero.
SchedulingDistribution importance_aware_policy(const DeviceState& state);

/// All mass on argmax R_m; ties go to the lowest index.
SchedulingDistribution channel_aware_policy(std::span<const double> rates);

/// All mass on argmax (n_m/n)||g_m|| - beta T_{U,m}; ties go to the lowest index.
SchedulingDistribution ica_policy(const DeviceState& state, std::span<const double> upload_times,
                                  double beta);

/// rho_t = sqrt( ell (t+1+nu) chi^2 / (2 (t+nu)^2 epsilon) * T_future ).
double rho(const BoundParams& bound, double future_time);

struct CtmSolution {
    SchedulingDistribution distribution;
    double rho = 0.0;
    double lambda = 0.0;
    /// lambda + min b_m over the support. When lambda sits close to -min b_m it
    /// carries the digits that lambda itself loses; b_m + lambda is best
    /// evaluated as (b_m - min b) + shift.
    double shift = 0.0;
    /// True when the gain-threshold mask was lifted because it left no device
    /// with a nonzero gradient.
    bool mask_lifted = false;
};

/// Solves for p_m = rho a_m / sqrt(b_m + lambda) on the support set
/// {m : a_m > 0, b_m finite, eligible_m}, with lambda chosen so that sum p = 1.
/// `eligible` may be empty (everyone eligible).
CtmSolution ctm_solve(std::span<const double> importance, std::span<const double> upload_times,
                      std::span<const bool> eligible, double rho_t);

/// Full policy: channel mask, rho_t, and ctm_solve.
CtmSolution ctm_policy(const DeviceState& state, const channel::ChannelRealization& channel,
                       const BoundParams& bound, double future_time);

/// A(t) eta^2 T_future sum a_m^2 / p_m + sum p_m T_{U,m}. Returns +inf when
/// some p_m = 0 with a_m > 0.
double p2_objective(std::span<const double> p, const DeviceState& state,
                    std::span<const double> upload_times, const BoundParams& bound,
                    double future_time);

/// sum (n_m/n)^2 ||g_m||^2 / p_m, the p-dependent variance factor.
double variance_term(std::span<const double> p, const DeviceState& state);

struct RoundsBound {
    double variance_part = 0.0;  // ell (t+1+nu) eta^2 / (2 eps) * variance_term
    double constant_part = 0.0;  // C^{(t+1)}
    [[nodiscard]] double total() const { return variance_part + constant_part; }
};

/// Upper bound on expected remaining rounds after round t. `g_proxy` stands in
/// for the non-causal G^{(t+1)}; `global_grad_norm` is ||g^{(t)}||.
RoundsBound remaining_rounds_bound(std::span<const double> p, const DeviceState& state,
                                   const BoundParams& bound, double g_proxy,
                                   double global_grad_norm);

/// Draws one device index with probability p_m. Never returns a zero-probability index.
std::size_t sample_device(const SchedulingDistribution& dist, Rng& rng);

}  // namespace feel::scheduler
