#pragma once

#include "pairlink/pipeline.hpp"
#include "pairlink/rng.hpp"
#include "pairlink/time_tags.hpp"

#include <cstdint>
#include <vector>

namespace pairlink::test {

inline std::vector<TimeTag> poisson_tags(double rate_hz, double duration_s,
                                         std::uint64_t seed, std::uint8_t channel = 0,
                                         std::int64_t resolution_ps = 1) {
    std::vector<TimeTag> tags;
    Rng rng(seed);
    double t = 0.0;
    while (true) {
        t += rng.exponential(rate_hz);
        if (t >= duration_s)
            break;
        tags.push_back({quantize(t * 1e12, resolution_ps), channel});
    }
    return tags;
}

inline TagStream poisson_stream(double rate_hz, double duration_s, std::uint64_t seed,
                                std::int64_t resolution_ps = 1) {
    TagStream s;
    s.resolution_ps = resolution_ps;
    s.tags = poisson_tags(rate_hz, duration_s, seed, 0, resolution_ps);
    return s;
}

inline std::vector<TimeTag> shifted(const std::vector<TimeTag>& tags, std::int64_t shift_ps) {
    std::vector<TimeTag> out = tags;
    for (TimeTag& t : out)
        t.t_ps += shift_ps;
    return out;
}

// single channel pair with flat noise, handy default for pipeline tests
inline ChannelPair test_pair(double a = 5e4, double b = 0.0) {
    ChannelPair p;
    p.index = 5;
    p.detuning_ghz = 500.0;
    p.a = a;
    p.b_s = b;
    p.b_i = b;
    return p;
}

inline SourceConfig test_source(double power_mw = 1.0, std::uint64_t seed = 42) {
    SourceConfig cfg;
    cfg.pump_power_mw = power_mw;
    cfg.pairs = {test_pair()};
    cfg.rng_seed = seed;
    return cfg;
}

inline NodeConfig ideal_node(std::int64_t resolution_ps = kDefaultResolutionPs) {
    NodeConfig n;
    n.detector.resolution_ps = resolution_ps;
    n.clock.rng_seed = 7;
    return n;
}

} // namespace pairlink::test
