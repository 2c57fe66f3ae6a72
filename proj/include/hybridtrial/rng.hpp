#pragma once

// Pinned pseudo-random stream used by every stochastic routine in the library.
//
// Engine: std::mt19937_64 (bit-exact across conforming standard libraries).
// Variates are produced here rather than through <random> distributions,
// whose algorithms are implementation-defined:
//   uniform   = ((u >> 11) + 0.5) * 2^-53, strictly inside (0, 1)
//   normal    = Box-Muller on two uniforms, cosine branch only
//   bernoulli = uniform < p
//   index     = (u >> 11) mod n (modulo bias below 2^-40 for n < 2^13)
// Stream splitting: child seed for stream k of seed s is
//   splitmix64(splitmix64(s) ^ splitmix64(k + 0x9E3779B97F4A7C15)).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace hybridtrial {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed for the k-th independent stream derived from a master seed.
constexpr std::uint64_t child_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x9E3779B97F4A7C15ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform index in [0, n). n must be positive.
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>((engine_() >> 11) % n);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace hybridtrial
