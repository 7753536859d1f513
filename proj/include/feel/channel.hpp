#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "feel/random.hpp"

namespace feel::channel {

inline constexpr double kInfiniteTime = std::numeric_limits<double>::infinity();

/// Uplink parameters shared by every device. SI units throughout.
struct CommParams {
    double bandwidth_hz = 1.0e6;
    std::uint32_t bits_per_param = 16;
    std::uint64_t num_params = 1'000'000;
    double noise_power_w = 0.0;
    /// Eligibility threshold on the small-scale fading gain |h_m|^2 / sigma_m^2.
    /// A device is eligible in a round when its gain reaches gain_threshold * sigma_m^2.
    double gain_threshold = 1.0e-3;
    double broadcast_time_s = 0.0;

    /// Payload size q*d in bits.
    [[nodiscard]] double payload_bits() const {
        return static_cast<double>(bits_per_param) * static_cast<double>(num_params);
    }

    void validate() const;
};

struct DeviceProfile {
    std::uint64_t dataset_size = 1;
    /// Mean of the exponential power-gain distribution.
    double channel_variance = 1.0;
    double transmit_power_w = 1.0;
    std::optional<double> distance_km;
    /// Key of the device's private channel stream. Travels with the device
    /// when profiles are reordered.
    std::uint64_t stream_key = 0;

    void validate() const;
};

/// One round of block fading for all devices.
struct ChannelRealization {
    std::vector<double> gain;
    std::vector<double> snr;
    std::vector<double> rate;         // bits/s/Hz
    std::vector<double> upload_time;  // seconds, kInfiniteTime when rate == 0
    std::vector<bool> eligible;       // gain >= gain_threshold * sigma^2

    [[nodiscard]] std::size_t size() const { return gain.size(); }
};

/// Thermal noise power over the band, from a density in dBm/Hz.
double noise_power_w(double density_dbm_per_hz, double bandwidth_hz);

double dbm_to_watts(double dbm);

/// Path loss in dB for a link of `distance_km`: 128.1 + 37.6 log10(d).
double path_loss_db(double distance_km);

/// Mean channel power gain implied by the path-loss model.
double path_loss_variance(double distance_km);

/// q*d / (B*R); kInfiniteTime when R == 0.
double upload_time(double rate, const CommParams& comm);

/// Fills snr/rate/upload_time/eligible from gains already drawn.
ChannelRealization realize(std::span<const double> gains, std::span<const DeviceProfile> devices,
                           const CommParams& comm);

/// Draws |h_m|^2 ~ Exp(mean sigma_m^2) for every device. `streams[m]` is the
/// engine owned by device m.
ChannelRealization sample_channels(std::span<const DeviceProfile> devices, const CommParams& comm,
                                   std::span<Rng> streams);

/// Single-engine convenience overload; draws devices in index order.
ChannelRealization sample_channels(std::span<const DeviceProfile> devices, const CommParams& comm,
                                   Rng& rng);

/// Expected reciprocal rate restricted to eligible gains,
///   Q_m = int_{g_th}^inf exp(-z/s) / (s log2(1 + P z / N0)) dz,   s = sigma_m^2,
/// with the lower limit at gain_threshold * sigma_m^2. The integral is the
/// truncated one, not renormalised by the eligibility probability.
double q_factor(const DeviceProfile& profile, const CommParams& comm);

/// Expected upload time of a future round when devices are scheduled in
/// proportion to their dataset sizes: sum_m q d n_m Q_m / (n B).
double expected_future_time(std::span<const DeviceProfile> devices, const CommParams& comm);

}  // namespace feel::channel
