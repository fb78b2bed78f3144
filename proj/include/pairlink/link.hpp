#pragma once

#include "pairlink/rng.hpp"
#include "pairlink/time_tags.hpp"

#include <cstdint>
#include <vector>

namespace pairlink {

struct LinkConfig {
    double length_km = 0.0;
    double delay_us_per_km = 5.0;
    double loss_db_per_km = 0.0;
    double extra_loss_db = 0.0;

    // rounded once, then applied exactly to every event
    std::int64_t delay_ps() const;
    double transmittance() const; // 10^(-total dB / 10)
};

struct DetectorConfig {
    double efficiency = 1.0;        // [0,1]
    double jitter_sigma_ps = 0.0;   // Gaussian, applied before quantization
    double dark_rate_hz = 0.0;      // per detector channel
    std::int64_t resolution_ps = kDefaultResolutionPs;
};

// Local clock error C(t) = initial_offset + linear_rate*t + random walk
// + per-second white phase scatter. The walk takes one Gaussian step per
// second and is interpolated linearly in between; the white term is constant
// within each second (1PPS-disciplining jitter) and independent across
// seconds. white_sigma_ps = 0 recovers the plain three-term model.
struct ClockModel {
    std::int64_t initial_offset_ps = 0;
    double linear_rate = 0.0; // dimensionless (s per s); 5e-12 nominal bound
    double random_walk_sigma_ps_per_sqrt_s = 0.0;
    double white_sigma_ps = 0.0;
    std::uint64_t rng_seed = 1;
};

// Per-second tables precomputed from the seed so parallel readers see an
// immutable trajectory.
class ClockTrajectory {
public:
    ClockTrajectory(const ClockModel& model, double duration_s);

    double offset_at(double t_s) const; // ps
    const std::vector<double>& walk_table() const { return walk_; }
    const std::vector<double>& white_table() const { return white_; }

private:
    ClockModel model_;
    std::vector<double> walk_;  // walk_[k] at t = k s; walk_[0] = 0
    std::vector<double> white_; // white_[k] on [k, k+1)
};

// Spec-shaped convenience; deterministic in (model.rng_seed, t).
double clock_offset_at(const ClockModel& model, double t_s);

// One photon heading into a detector channel.
struct ArmEvent {
    double t_true_ps = 0.0;
    std::uint8_t channel = 0;
};

// Shift every event by the link delay and keep it with the link
// transmittance; input order is preserved (constant shift keeps it sorted).
std::vector<ArmEvent> propagate(const std::vector<ArmEvent>& events, const LinkConfig& link,
                                Rng& rng);

// Efficiency thinning + Gaussian jitter + clock offset + quantization, with
// channel-local dark counts over [0, duration). Tags whose local time lands
// below the epoch are dropped (the TTU was not armed yet).
TagStream detect(const std::vector<ArmEvent>& events, const DetectorConfig& det,
                 const ClockModel& clock, double duration_s, int n_channels = 1);

// Chunk-level worker shared by detect() and the two-node pipeline: transforms
// events through an existing trajectory and appends quantized tags (unsorted
// across chunk boundaries; caller sorts once).
void detect_into(const std::vector<ArmEvent>& events, const DetectorConfig& det,
                 const ClockTrajectory& clock, Rng& rng, std::vector<TimeTag>& out);

// Poisson dark counts on one channel, local-time uniform over [t0, t0+len).
void append_dark_counts(const DetectorConfig& det, std::uint8_t channel, double t0_s,
                        double len_s, Rng& rng, std::vector<TimeTag>& out);

} // namespace pairlink
