#include "feel/channel.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "feel/error.hpp"

namespace feel::channel {

namespace {

constexpr double kQuadratureAbsTol = 1.0e-8;
constexpr double kQuadratureSpan = 50.0;  // in units of sigma^2 above the threshold
constexpr unsigned kQuadratureMaxDepth = 30;

void require(bool ok, const char* what) {
    if (!ok) throw InvalidArgument(what);
}

}  // namespace

void CommParams::validate() const {
    require(std::isfinite(bandwidth_hz) && bandwidth_hz > 0.0, "bandwidth_hz must be > 0");
    require(bits_per_param >= 1, "bits_per_param must be >= 1");
    require(num_params >= 1, "num_params must be >= 1");
    require(std::isfinite(noise_power_w) && noise_power_w > 0.0, "noise_power_w must be > 0");
    require(std::isfinite(gain_threshold) && gain_threshold >= 0.0, "gain_threshold must be >= 0");
    require(std::isfinite(broadcast_time_s) && broadcast_time_s >= 0.0,
            "broadcast_time_s must be >= 0");
}

void DeviceProfile::validate() const {
    require(dataset_size >= 1, "dataset_size must be >= 1");
    require(std::isfinite(channel_variance) && channel_variance > 0.0,
            "channel_variance must be > 0");
    require(std::isfinite(transmit_power_w) && transmit_power_w > 0.0,
            "transmit_power_w must be > 0");
    if (distance_km) require(*distance_km > 0.0, "distance_km must be > 0");
}

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double noise_power_w(double density_dbm_per_hz, double bandwidth_hz) {
    require(bandwidth_hz > 0.0, "bandwidth_hz must be > 0");
    return dbm_to_watts(density_dbm_per_hz + 10.0 * std::log10(bandwidth_hz));
}

double path_loss_db(double distance_km) {
    if (!(distance_km > 0.0)) throw InvalidArgument("distance_km must be > 0");
    return 128.1 + 37.6 * std::log10(distance_km);
}

double path_loss_variance(double distance_km) {
    return std::pow(10.0, -path_loss_db(distance_km) / 10.0);
}

double upload_time(double rate, const CommParams& comm) {
    if (std::isnan(rate) || rate < 0.0) throw InvalidArgument("rate must be >= 0");
    if (rate == 0.0) return kInfiniteTime;
    return comm.payload_bits() / (comm.bandwidth_hz * rate);
}

ChannelRealization realize(std::span<const double> gains, std::span<const DeviceProfile> devices,
                           const CommParams& comm) {
    require(gains.size() == devices.size(), "one gain per device");
    const std::size_t m_count = devices.size();
    ChannelRealization out;
    out.gain.assign(gains.begin(), gains.end());
    out.snr.resize(m_count);
    out.rate.resize(m_count);
    out.upload_time.resize(m_count);
    out.eligible.resize(m_count);
    for (std::size_t m = 0; m < m_count; ++m) {
        out.snr[m] = devices[m].transmit_power_w * gains[m] / comm.noise_power_w;
        out.rate[m] = std::log2(1.0 + out.snr[m]);
        out.upload_time[m] = upload_time(out.rate[m], comm);
        out.eligible[m] = gains[m] >= comm.gain_threshold * devices[m].channel_variance &&
                          std::isfinite(out.upload_time[m]);
    }
    return out;
}

ChannelRealization sample_channels(std::span<const DeviceProfile> devices, const CommParams& comm,
                                   std::span<Rng> streams) {
    require(streams.size() == devices.size(), "one stream per device");
    std::vector<double> gains(devices.size());
    for (std::size_t m = 0; m < devices.size(); ++m) {
        gains[m] = exponential(streams[m], devices[m].channel_variance);
    }
    return realize(gains, devices, comm);
}

ChannelRealization sample_channels(std::span<const DeviceProfile> devices, const CommParams& comm,
                                   Rng& rng) {
    std::vector<double> gains(devices.size());
    for (std::size_t m = 0; m < devices.size(); ++m) {
        gains[m] = exponential(rng, devices[m].channel_variance);
    }
    return realize(gains, devices, comm);
}

double q_factor(const DeviceProfile& profile, const CommParams& comm) {
    if (!(comm.gain_threshold > 0.0)) {
        throw InvalidArgument("q_factor needs gain_threshold > 0; the integrand diverges at z = 0");
    }
    // u = z / sigma^2 turns the integrand into exp(-u) / log2(1 + k u).
    const double k = profile.transmit_power_w * profile.channel_variance / comm.noise_power_w;
    const double lo = comm.gain_threshold;
    const double hi = lo + kQuadratureSpan;
    // With low SNR the integrand behaves like 1/u near the threshold, so
    // integrate over x = log(u / lo), where it is smooth: du = u dx.
    auto integrand = [k, lo](double x) {
        const double u = lo * std::exp(x);
        return u * std::exp(-u) / std::log2(1.0 + k * u);
    };

    double error = 0.0;
    double l1 = 0.0;
    const double value = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        integrand, 0.0, std::log(hi / lo), kQuadratureMaxDepth, 1.0e-12, &error, &l1);
    // Beyond hi the integrand is below exp(-u) / log2(1 + k lo).
    const double tail_bound = std::exp(-hi) / std::log2(1.0 + k * lo);
    const double total_error = error + tail_bound;

    if (!std::isfinite(value) || !(value > 0.0) || total_error > kQuadratureAbsTol) {
        std::ostringstream msg;
        msg << "q_factor quadrature did not converge: value=" << value << " error=" << error
            << " tail_bound=" << tail_bound << " snr_scale=" << k << " threshold=" << lo;
        throw NumericError(msg.str());
    }
    return value;
}

double expected_future_time(std::span<const DeviceProfile> devices, const CommParams& comm) {
    require(!devices.empty(), "at least one device");
    double total_n = 0.0;
    for (const auto& d : devices) total_n += static_cast<double>(d.dataset_size);
    double weighted_q = 0.0;
    for (const auto& d : devices) {
        weighted_q += static_cast<double>(d.dataset_size) / total_n * q_factor(d, comm);
    }
    return comm.payload_bits() * weighted_q / comm.bandwidth_hz;
}

}  // namespace feel::channel
