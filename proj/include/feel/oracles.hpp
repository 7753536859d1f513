#pragma once

// Brute-force reference computations. Nothing here calls into the code paths
// it is used to check: the grid search never sees the KKT solution, and the
// Monte Carlo estimators never touch the quadrature.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "feel/channel.hpp"
#include "feel/learning.hpp"
#include "feel/random.hpp"

namespace feel::oracles {

struct GridMinimum {
    std::vector<double> p;
    double value = 0.0;
};

/// Minimises f over the 3-simplex grid {(i, j, k) / resolution}.
GridMinimum simplex_grid_min_3(const std::function<double(std::span<const double>)>& f,
                               std::size_t resolution);

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Q_m by sampling the exponential gain conditioned on reaching the threshold,
/// weighted by the probability of reaching it.
Estimate monte_carlo_q(const channel::DeviceProfile& profile, const channel::CommParams& comm,
                       std::size_t samples, Rng& rng);

/// Upload time of a future round by direct simulation: device drawn with
/// probability n_m / n, gain drawn, ineligible draws count as zero.
Estimate monte_carlo_round_time(std::span<const channel::DeviceProfile> devices,
                                const channel::CommParams& comm, std::size_t samples, Rng& rng);

struct VectorEstimate {
    learning::Vector mean;
    learning::Vector std_error;
};

/// Mean over `draws` of the scaled upload (n_m / (n p_m)) g_m with m ~ p.
VectorEstimate monte_carlo_scaled_upload(std::span<const learning::Vector> grads,
                                         std::span<const std::size_t> sizes,
                                         std::span<const double> p, std::size_t draws, Rng& rng);

/// Central-difference gradient of `f` at w with step h.
learning::Vector finite_difference_gradient(const std::function<double(const learning::Vector&)>& f,
                                            const learning::Vector& w, double h);

/// Names accepted by run_named: "grid-search", "monte-carlo-q", "unbiasedness".
std::vector<std::string> oracle_names();

/// Runs a named verification, printing one line per check. Returns true when
/// every check passes. Throws InvalidArgument for an unknown name.
bool run_named(const std::string& name, std::ostream& out);

}  // namespace feel::oracles
