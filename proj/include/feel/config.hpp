#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "feel/scheduler.hpp"
#include "feel/simulator.hpp"

namespace feel::harness {

/// Parse or validation failure; `field()` is a dotted path such as
/// "channel.bandwidth_hz" or "devices[2].distance_km".
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
    [[nodiscard]] const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct DeviceConfig {
    std::uint64_t dataset_size = 100;
    std::optional<double> distance_km;
    std::optional<double> channel_variance;
    double transmit_power_dbm = 24.0;

    bool operator==(const DeviceConfig&) const = default;
};

struct ChannelConfig {
    double bandwidth_hz = 1.0e6;
    double noise_density_dbm_per_hz = -174.0;
    std::uint32_t bits_per_param = 16;
    std::uint64_t num_params = 1'000'000;
    double gain_threshold = 1.0e-3;
    double broadcast_time_s = 0.0;

    bool operator==(const ChannelConfig&) const = default;
};

struct TaskConfig {
    std::string type = "quadratic";  // "quadratic" | "logistic"
    std::size_t dim = 10;
    double heterogeneity = 1.0;  // quadratic
    double label_skew = 0.5;     // logistic
    double l2_reg = 0.1;         // logistic
    std::size_t batch_size = 0;  // 0 = full local dataset
    std::uint64_t seed = 0;      // task data are shared by every run
    /// Initial model entries ~ N(0, init_scale^2) from the task stream; 0 starts at the origin.
    double init_scale = 0.0;

    bool operator==(const TaskConfig&) const = default;
};

struct ScheduleConfig {
    double chi = 1.0;
    double nu = 1.0;

    bool operator==(const ScheduleConfig&) const = default;
};

struct RunConfig {
    double epsilon = 1.0e-3;
    std::size_t max_rounds = 10'000;
    std::vector<std::string> policies{"ctm", "ia", "ca", "ica", "uniform"};
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir = "out";
    double ica_beta = 0.01;
    /// Simulated-time snapshots for the loss-gap summary. Empty means 30% and
    /// 70% of the median converged run time.
    std::vector<double> checkpoints_s;

    bool operator==(const RunConfig&) const = default;
};

struct ExperimentConfig {
    std::vector<DeviceConfig> devices;
    ChannelConfig channel;
    TaskConfig task;
    ScheduleConfig schedule;
    RunConfig run;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Four devices, 1 MHz, -174 dBm/Hz, 24 dBm, 16 bits per parameter.
ExperimentConfig default_config();

nlohmann::json to_json(const ExperimentConfig& config);
/// Rejects unknown keys and invalid values with a ConfigError naming the field.
ExperimentConfig from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);
std::string serialize_config(const ExperimentConfig& config);

/// Field-level checks that do not need the task built.
void validate(const ExperimentConfig& config);

std::vector<channel::DeviceProfile> build_devices(const ExperimentConfig& config);
channel::CommParams build_comm(const ExperimentConfig& config);
std::shared_ptr<const learning::LearningTask> build_task(const ExperimentConfig& config);
learning::Vector initial_model(const ExperimentConfig& config, std::size_t dim);
/// Builds everything and runs SimulationSetup::validate.
std::shared_ptr<const simulator::SimulationSetup> build_setup(const ExperimentConfig& config);

std::vector<scheduler::Policy> parse_policy_list(const std::string& csv);
/// "0..19", "3", or "1,4,9".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace feel::harness
