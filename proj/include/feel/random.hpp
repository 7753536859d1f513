#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace feel {

using Rng = std::mt19937_64;

/// Independent stream tags. A run derives one engine per (tag, key) from its
/// master seed, so changing the policy never shifts the channel sequence.
enum class Stream : std::uint32_t {
    channel = 1,
    batch = 2,
    device = 3,
    task = 4,
};

inline Rng make_stream(std::uint64_t seed, Stream tag, std::uint64_t key = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(key),
                      static_cast<std::uint32_t>(key >> 32)};
    return Rng(seq);
}

// The std distributions are implementation-defined; these are not, which keeps
// CSV output identical across standard libraries.

/// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return static_cast<std::size_t>(x % bound);
}

/// Exponential variate with the given mean (inverse CDF).
inline double exponential(Rng& rng, double mean) {
    return -mean * std::log1p(-uniform01(rng));
}

/// Standard normal variate (Box-Muller, one output per call).
inline double standard_normal(Rng& rng) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace feel
