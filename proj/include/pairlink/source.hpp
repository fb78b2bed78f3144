#pragma once

#include "pairlink/rng.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace pairlink {

// Per-channel-pair SFWM coefficients of the aP^2 + bP + c rate model.
// Rates are on-chip, per second; P in mW. b and c are per arm so a Stokes /
// anti-Stokes asymmetry (b_i > b_s on the low-frequency side) is expressible.
struct ChannelPair {
    int index = 0;            // m: pair m sits at +-m*100 GHz around the pump
    double detuning_ghz = 0;  // symmetric offset from the 193.5 THz pump
    double a = 0;             // pair rate, s^-1 mW^-2
    double b_s = 0;           // signal-arm linear noise, s^-1 mW^-1
    double b_i = 0;           // idler-arm linear noise, s^-1 mW^-1
    double c_s = 0;           // constant backgrounds, s^-1
    double c_i = 0;
};

struct SourceConfig {
    double pump_power_mw = 1.0;
    std::vector<ChannelPair> pairs;
    double phase_theta = 0.0; // relative phase of the |VV> term
    double visibility = 1.0;  // scalar on the ideal correlation
    bool single_nanowire = false; // doubles the pair-rate quadratic term only
    std::uint64_t rng_seed = 1;
};

// dark is reserved: dark counts originate at the detector (link module)
enum class EventKind : std::uint8_t { pair, noise_s, noise_i, dark };

struct PairEvent {
    double t_true_ps = 0.0;
    std::uint32_t pair_index = 0;
    EventKind kind = EventKind::pair;
};

// a*P^2 (doubled in single-nanowire mode, b and c untouched)
double pair_rate(double pump_power_mw, const ChannelPair& pair, bool single_nanowire = false);

enum class Arm { signal, idler };

// a*P^2 + b*P + c for one arm
double singles_rate(double pump_power_mw, const ChannelPair& pair, Arm arm,
                    bool single_nanowire = false);

// Homogeneous Poisson emission for one channel pair over [t0, t0+duration),
// merged and time-sorted. Deterministic in (cfg.rng_seed, pair.index, chunk
// ids); chunks are generated independently so long runs never hold the whole
// event list at once.
std::vector<PairEvent> generate_events(const SourceConfig& cfg, const ChannelPair& pair,
                                       double t0_s, double duration_s);

// Convenience over all configured pairs (small runs / tests).
std::vector<PairEvent> generate_events(const SourceConfig& cfg, double duration_s);

struct OutcomeProbabilities {
    // P(i,j) = (1 + i*j*E)/4 with E = V (cos2tA cos2tB + cos theta sin2tA sin2tB)
    double e_model = 0.0;
    std::array<double, 4> p; // ++, +-, -+, --
};

OutcomeProbabilities outcome_probabilities(double theta_a_rad, double theta_b_rad,
                                           const SourceConfig& cfg);

struct Outcome {
    int a = +1; // +1 or -1
    int b = +1;
};

// Exact sampling from the four joint probabilities.
Outcome sample_polarization_outcome(double theta_a_rad, double theta_b_rad,
                                    const SourceConfig& cfg, Rng& rng);

} // namespace pairlink
