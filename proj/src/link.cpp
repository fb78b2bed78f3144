#include "pairlink/link.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pairlink {

namespace {
constexpr double kPsPerSecond = 1e12;
constexpr std::uint64_t kStreamWalk = 11;
constexpr std::uint64_t kStreamWhite = 12;
constexpr std::uint64_t kStreamDarks = 13;
} // namespace

std::int64_t LinkConfig::delay_ps() const {
    return std::llround(length_km * delay_us_per_km * 1e6);
}

double LinkConfig::transmittance() const {
    const double db = loss_db_per_km * length_km + extra_loss_db;
    return std::pow(10.0, -db / 10.0);
}

ClockTrajectory::ClockTrajectory(const ClockModel& model, double duration_s) : model_(model) {
    if (duration_s < 0.0)
        throw std::invalid_argument("ClockTrajectory: negative duration");
    const auto seconds = static_cast<std::size_t>(std::ceil(duration_s)) + 2;

    walk_.resize(seconds + 1, 0.0);
    if (model.random_walk_sigma_ps_per_sqrt_s > 0.0) {
        Rng rng(derive_seed(model.rng_seed, kStreamWalk));
        for (std::size_t k = 1; k <= seconds; ++k)
            walk_[k] = walk_[k - 1] + model.random_walk_sigma_ps_per_sqrt_s * rng.normal();
    }

    white_.resize(seconds + 1, 0.0);
    if (model.white_sigma_ps > 0.0) {
        Rng rng(derive_seed(model.rng_seed, kStreamWhite));
        for (std::size_t k = 0; k <= seconds; ++k)
            white_[k] = model.white_sigma_ps * rng.normal();
    }
}

double ClockTrajectory::offset_at(double t_s) const {
    const double base = static_cast<double>(model_.initial_offset_ps) +
                        model_.linear_rate * t_s * kPsPerSecond;
    const auto last = walk_.size() - 1;
    double k_floor = std::floor(t_s);
    if (k_floor < 0.0)
        k_floor = 0.0;
    std::size_t k = static_cast<std::size_t>(k_floor);
    if (k >= last)
        k = last - 1;
    const double frac = std::clamp(t_s - static_cast<double>(k), 0.0, 1.0);
    const double walk = walk_[k] + frac * (walk_[k + 1] - walk_[k]);
    return base + walk + white_[k];
}

double clock_offset_at(const ClockModel& model, double t_s) {
    if (t_s < 0.0)
        throw std::invalid_argument("clock_offset_at: negative time");
    return ClockTrajectory(model, t_s).offset_at(t_s);
}

std::vector<ArmEvent> propagate(const std::vector<ArmEvent>& events, const LinkConfig& link,
                                Rng& rng) {
    const std::int64_t delay = link.delay_ps();
    const double p = link.transmittance();
    std::vector<ArmEvent> out;
    out.reserve(static_cast<std::size_t>(static_cast<double>(events.size()) * p) + 16);
    for (const ArmEvent& e : events) {
        if (p < 1.0 && !rng.bernoulli(p))
            continue;
        out.push_back({e.t_true_ps + static_cast<double>(delay), e.channel});
    }
    return out;
}

void detect_into(const std::vector<ArmEvent>& events, const DetectorConfig& det,
                 const ClockTrajectory& clock, Rng& rng, std::vector<TimeTag>& out) {
    if (det.efficiency < 0.0 || det.efficiency > 1.0)
        throw std::invalid_argument("detect: efficiency outside [0,1]");
    if (det.resolution_ps <= 0)
        throw std::invalid_argument("detect: resolution_ps must be positive");

    for (const ArmEvent& e : events) {
        if (det.efficiency < 1.0 && !rng.bernoulli(det.efficiency))
            continue;
        double t = e.t_true_ps;
        if (det.jitter_sigma_ps > 0.0)
            t += det.jitter_sigma_ps * rng.normal();
        t += clock.offset_at(t / kPsPerSecond);
        if (t < 0.0)
            continue; // before the TTU epoch
        out.push_back({quantize(t, det.resolution_ps), e.channel});
    }
}

void append_dark_counts(const DetectorConfig& det, std::uint8_t channel, double t0_s,
                        double len_s, Rng& rng, std::vector<TimeTag>& out) {
    if (det.dark_rate_hz <= 0.0 || len_s <= 0.0)
        return;
    double t = t0_s + rng.exponential(det.dark_rate_hz);
    const double end = t0_s + len_s;
    while (t < end) {
        out.push_back({quantize(t * kPsPerSecond, det.resolution_ps), channel});
        t += rng.exponential(det.dark_rate_hz);
    }
}

TagStream detect(const std::vector<ArmEvent>& events, const DetectorConfig& det,
                 const ClockModel& clock, double duration_s, int n_channels) {
    double span_s = duration_s;
    for (const ArmEvent& e : events)
        span_s = std::max(span_s, e.t_true_ps / kPsPerSecond);
    const ClockTrajectory trajectory(clock, span_s);

    TagStream stream;
    stream.resolution_ps = det.resolution_ps;

    Rng rng(derive_seed(clock.rng_seed, 0xdefec7ULL));
    detect_into(events, det, trajectory, rng, stream.tags);
    for (int ch = 0; ch < n_channels; ++ch) {
        Rng dark_rng(derive_seed(clock.rng_seed, kStreamDarks, static_cast<std::uint64_t>(ch)));
        append_dark_counts(det, static_cast<std::uint8_t>(ch), 0.0, duration_s, dark_rng,
                           stream.tags);
    }
    std::sort(stream.tags.begin(), stream.tags.end());
    return stream;
}

} // namespace pairlink
