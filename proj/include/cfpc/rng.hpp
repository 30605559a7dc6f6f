// Deterministic random streams: a master seed fans out to named substreams
// so that changing one experiment stage does not perturb the draws of others.
#pragma once

#include <complex>
#include <cstdint>
#include <string_view>

namespace cfpc {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace detail

/// xoshiro256++ stream with named-substream derivation. All draws are
/// bit-reproducible for a given derived seed, independent of platform.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64(sm);
    }

    /// Child stream whose draws are independent of this stream's position.
    RandomStream substream(std::string_view name) const {
        std::uint64_t mix = seed_ ^ detail::fnv1a64(name);
        return RandomStream(detail::splitmix64(mix));
    }

    /// Indexed child stream (per-sample, per-AP, ... fan-out).
    RandomStream substream(std::string_view name, std::uint64_t index) const {
        std::uint64_t mix = seed_ ^ detail::fnv1a64(name);
        mix = detail::splitmix64(mix);
        mix ^= 0x9E3779B97F4A7C15ULL * (index + 1);
        return RandomStream(detail::splitmix64(mix));
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (cosine branch, no cached state).
    double normal() {
        const double u1 = 1.0 - uniform(); // (0, 1], keeps log() finite
        const double u2 = uniform();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    /// Circularly-symmetric complex Gaussian CN(0, variance): two
    /// independent real Gaussians with half the variance each.
    std::complex<double> cgaussian(double variance) {
        const double s = std::sqrt(0.5 * variance);
        const double re = s * normal();
        const double im = s * normal();
        return {re, im};
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t seed_;
    std::uint64_t state_[4]{};
};

} // namespace cfpc
