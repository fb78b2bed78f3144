#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace pairlink {

// Counter-based SplitMix64 generator. All randomness in the simulator flows
// from one run seed through derive(), so identical seeds give identical
// event sequences on any platform (integer mixing + IEEE-754 transforms only).
// Streams for independent work items (channel pair, event kind, time chunk,
// CHSH setting, ...) are split off with derive() and never share state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1], safe as a log() argument
    double uniform_pos() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller, trigonometric form; consumes two uniforms per draw so the
    // stream position does not depend on cached state.
    double normal() {
        const double u = uniform_pos();
        const double v = uniform();
        return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // exponential inter-arrival gap for a rate-per-second Poisson process
    double exponential(double rate_hz) { return -std::log(uniform_pos()) / rate_hz; }

private:
    std::uint64_t state_;
};

// Hash-derive an independent sub-seed; order of the ids matters.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t id) {
    std::uint64_t z = seed ^ (id + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

template <typename... Ids>
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t id, Ids... rest) {
    return derive_seed(derive_seed(seed, id), static_cast<std::uint64_t>(rest)...);
}

} // namespace pairlink
