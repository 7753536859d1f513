#include "feel/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "feel/error.hpp"

namespace feel::simulator {

using learning::Vector;
using scheduler::Policy;

void SimulationSetup::validate() const {
    if (!task) throw InvalidArgument("simulation needs a learning task");
    if (devices.empty()) throw InvalidArgument("simulation needs at least one device");
    if (devices.size() != task->num_devices()) {
        throw InvalidArgument("device profiles and task disagree on the number of devices");
    }
    for (std::size_t m = 0; m < devices.size(); ++m) {
        devices[m].validate();
        if (devices[m].dataset_size != task->dataset_size(m)) {
            throw InvalidArgument("device " + std::to_string(m) +
                                  ": profile dataset_size does not match the task data");
        }
        if (batch_size > devices[m].dataset_size) {
            throw InvalidArgument("batch_size exceeds the dataset of device " + std::to_string(m));
        }
    }
    comm.validate();
    schedule.validate();
    schedule.require_contraction(task->strong_convexity());
    if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
    if (max_rounds == 0) throw InvalidArgument("max_rounds must be >= 1");
    if (!(ica_beta >= 0.0)) throw InvalidArgument("ica_beta must be >= 0");
    if (initial_model.size() != 0 &&
        initial_model.size() != static_cast<Eigen::Index>(task->dimension())) {
        throw InvalidArgument("initial_model has the wrong dimension");
    }
}

bool check_convergence(const learning::LearningTask& task, const Vector& w, double epsilon) {
    return std::abs(task.loss(w) - task.optimum_loss()) <= epsilon;
}

Simulation::Simulation(std::shared_ptr<const SimulationSetup> setup, Policy policy,
                       std::uint64_t seed)
    : setup_(std::move(setup)), policy_(policy), device_stream_(make_stream(seed, Stream::device)) {
    setup_->validate();
    const auto& s = *setup_;
    w_ = s.initial_model.size() != 0
             ? s.initial_model
             : Vector::Zero(static_cast<Eigen::Index>(s.task->dimension()));
    for (const auto& d : s.devices) {
        channel_streams_.push_back(make_stream(seed, Stream::channel, d.stream_key));
        batch_streams_.push_back(make_stream(seed, Stream::batch, d.stream_key));
    }
    if (policy_ == Policy::ctm) future_time_ = channel::expected_future_time(s.devices, s.comm);
}

std::size_t Simulation::batch_for(std::size_t device) const {
    const auto& s = *setup_;
    return s.batch_size == 0 ? s.devices[device].dataset_size : s.batch_size;
}

bool Simulation::converged() const {
    return check_convergence(*setup_->task, w_, setup_->epsilon);
}

RoundLog Simulation::run_round() {
    const auto& s = *setup_;
    const auto& task = *s.task;
    const std::size_t count = s.devices.size();

    RoundLog log;
    log.round = round_;
    log.policy = policy_;

    // Broadcast, and this round's block-fading draw.
    double elapsed = s.comm.broadcast_time_s;
    const channel::ChannelRealization ch = channel::sample_channels(s.devices, s.comm, channel_streams_);

    // Every device trains on the fresh model.
    std::vector<Vector> grads;
    grads.reserve(count);
    std::vector<std::size_t> sizes(count);
    log.grad_norms.resize(count);
    Vector aggregate = Vector::Zero(w_.size());
    const double n = static_cast<double>(task.total_size());
    for (std::size_t m = 0; m < count; ++m) {
        grads.push_back(learning::local_gradient(task, m, w_, batch_for(m), batch_streams_[m]));
        sizes[m] = s.devices[m].dataset_size;
        log.grad_norms[m] = grads.back().norm();
        aggregate += (static_cast<double>(sizes[m]) / n) * grads.back();
    }
    const scheduler::DeviceState state{log.grad_norms, sizes};

    scheduler::SchedulingDistribution dist;
    switch (policy_) {
        case Policy::uniform: dist = scheduler::uniform_policy(count); break;
        case Policy::importance_aware: dist = scheduler::importance_aware_policy(state); break;
        case Policy::channel_aware: dist = scheduler::channel_aware_policy(ch.rate); break;
        case Policy::ica: dist = scheduler::ica_policy(state, ch.upload_time, s.ica_beta); break;
        case Policy::ctm: {
            scheduler::BoundParams bound;
            bound.smoothness = task.smoothness();
            bound.strong_convexity = task.strong_convexity();
            bound.epsilon = s.epsilon;
            bound.schedule = s.schedule;
            bound.round = round_;
            const scheduler::CtmSolution sol = scheduler::ctm_policy(state, ch, bound, future_time_);
            dist = sol.distribution;
            g_proxy_ = std::max(g_proxy_, aggregate.norm());
            log.rho = sol.rho;
            log.lambda = sol.lambda;
            log.bound =
                scheduler::remaining_rounds_bound(dist.p, state, bound, g_proxy_, aggregate.norm()).total();
            break;
        }
    }

    const std::size_t chosen = scheduler::sample_device(dist, device_stream_);
    log.device = chosen;
    log.upload_s = ch.upload_time[chosen];
    elapsed += log.upload_s;

    const Vector upload = learning::scaled_upload(grads[chosen], sizes[chosen], task.total_size(),
                                                  dist.p[chosen]);
    log.eta = s.schedule.eta(round_);
    w_ = learning::apply_update(w_, round_, s.schedule, upload);

    clock_ += elapsed;
    log.round_s = elapsed;
    log.cum_s = clock_;
    log.loss = task.loss(w_);
    log.gap = log.loss - task.optimum_loss();
    ++round_;
    return log;
}

RunResult run_experiment(std::shared_ptr<const SimulationSetup> setup, Policy policy,
                         std::uint64_t seed) {
    Simulation sim(setup, policy, seed);
    RunResult result;
    result.policy = policy;
    result.seed = seed;
    result.initial_loss = setup->task->loss(sim.model());
    result.initial_gap = result.initial_loss - setup->task->optimum_loss();

    bool done = sim.converged();
    while (!done && sim.round() < setup->max_rounds) {
        try {
            result.logs.push_back(sim.run_round());
        } catch (const StarvationError&) {
            result.stalled = true;
            break;
        }
        done = sim.converged();
    }
    result.converged = sim.converged();
    result.rounds = sim.round();
    result.total_time = sim.clock();
    return result;
}

}  // namespace feel::simulator
