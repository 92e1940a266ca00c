#pragma once

#include <cmath>
#include <cstdint>

#include "siamdff/tensor.hpp"

namespace siamdff {

// Deterministic generator with a stable, documented stream: xoshiro256**
// with its four state words filled from SplitMix64. Same seed, same stream,
// on every platform. Do not swap in std::mt19937 here; the test fixtures
// freeze values from this exact sequence.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1), 53 mantissa bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Box-Muller; second draw is cached so the stream stays reproducible.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

Tensor random_uniform(Rng& rng, std::vector<std::size_t> shape, real_t lo, real_t hi);
Tensor random_normal(Rng& rng, std::vector<std::size_t> shape);

/// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
Tensor fan_in_init(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in);

}  // namespace siamdff
