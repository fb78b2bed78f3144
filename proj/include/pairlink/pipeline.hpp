#pragma once

#include "pairlink/link.hpp"
#include "pairlink/source.hpp"
#include "pairlink/time_tags.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace pairlink {

struct NodeConfig {
    LinkConfig link;        // Alice's is usually 0 km (local measurement)
    DetectorConfig detector;
    ClockModel clock;
};

struct AnalyzerSettings {
    double theta_a_rad = 0.0;
    double theta_b_rad = 0.0;
};

struct TwoNodeTruth {
    std::int64_t alice_delay_ps = 0;
    std::int64_t bob_delay_ps = 0;
    std::vector<double> clock_alice_ps; // C(t) at integer seconds, oracle data
    std::vector<double> clock_bob_ps;
    std::uint64_t pair_events = 0;    // generated on-chip pair emissions
    std::uint64_t noise_s_events = 0; // noise photons reaching the detector
    std::uint64_t noise_i_events = 0; // (generated pre-thinned, see pipeline.cpp)
};

struct TwoNodeRun {
    TagStream alice;
    TagStream bob;
    TwoNodeTruth truth;
};

// Full emission -> detection chain for one channel pair: Alice measures the
// idler locally, Bob receives the signal through his link. With analyzer
// settings present each node has two detector channels (+ -> 0, - -> 1) and
// pair outcomes follow the polarization model; without, everything lands on
// channel 0. Runs in 10 s chunks so long acquisitions never hold the whole
// true-event list; identical (config, seed) gives identical streams.
TwoNodeRun simulate_two_node(const SourceConfig& source, const ChannelPair& pair,
                             const NodeConfig& alice, const NodeConfig& bob,
                             double duration_s, std::uint64_t run_seed,
                             const std::optional<AnalyzerSettings>& settings = std::nullopt);

} // namespace pairlink
