#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "feel/channel.hpp"
#include "feel/learning.hpp"
#include "feel/random.hpp"
#include "feel/scheduler.hpp"

namespace feel::simulator {

struct RoundLog {
    std::size_t round = 0;
    scheduler::Policy policy = scheduler::Policy::uniform;
    std::size_t device = 0;
    double eta = 0.0;
    double upload_s = 0.0;
    double round_s = 0.0;  // broadcast + upload
    double cum_s = 0.0;
    double loss = 0.0;     // L(w) after this round's update
    double gap = 0.0;      // loss - L(w*)
    std::vector<double> grad_norms;
    // CTM only.
    std::optional<double> rho;
    std::optional<double> lambda;
    std::optional<double> bound;
};

struct RunResult {
    std::vector<RoundLog> logs;
    scheduler::Policy policy = scheduler::Policy::uniform;
    std::uint64_t seed = 0;
    bool converged = false;
    /// The policy found nothing to schedule (every gradient zero).
    bool stalled = false;
    std::size_t rounds = 0;
    double total_time = 0.0;
    double initial_loss = 0.0;
    double initial_gap = 0.0;
};

/// Everything a run needs besides the policy and the seed.
struct SimulationSetup {
    std::vector<channel::DeviceProfile> devices;
    channel::CommParams comm;
    std::shared_ptr<const learning::LearningTask> task;
    learning::StepSchedule schedule;
    double epsilon = 1.0e-3;
    std::size_t max_rounds = 10'000;
    /// Local SGD batch; 0 means each device's full dataset.
    std::size_t batch_size = 0;
    double ica_beta = 0.01;
    /// Starting model; empty means the zero vector.
    learning::Vector initial_model;

    void validate() const;
};

/// |L(w) - L(w*)| <= epsilon.
bool check_convergence(const learning::LearningTask& task, const learning::Vector& w, double epsilon);

/// One FEEL run. Owns its model, clock and random streams; not thread-safe,
/// but independent instances may run in parallel.
class Simulation {
public:
    Simulation(std::shared_ptr<const SimulationSetup> setup, scheduler::Policy policy,
               std::uint64_t seed);

    /// Broadcast, local gradients, scheduling, sampling, upload, update.
    /// Throws StarvationError when the policy has nothing to schedule.
    RoundLog run_round();

    [[nodiscard]] bool converged() const;
    [[nodiscard]] std::size_t round() const { return round_; }
    [[nodiscard]] double clock() const { return clock_; }
    [[nodiscard]] const learning::Vector& model() const { return w_; }
    [[nodiscard]] double future_time() const { return future_time_; }

private:
    [[nodiscard]] std::size_t batch_for(std::size_t device) const;

    std::shared_ptr<const SimulationSetup> setup_;
    scheduler::Policy policy_;
    learning::Vector w_;
    std::size_t round_ = 0;
    double clock_ = 0.0;
    double g_proxy_ = 0.0;
    double future_time_ = 0.0;
    std::vector<Rng> channel_streams_;
    std::vector<Rng> batch_streams_;
    Rng device_stream_;
};

/// Rounds until epsilon-accuracy or max_rounds. Deterministic in (setup, policy, seed).
RunResult run_experiment(std::shared_ptr<const SimulationSetup> setup, scheduler::Policy policy,
                         std::uint64_t seed);

}  // namespace feel::simulator
