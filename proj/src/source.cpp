#include "pairlink/source.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pairlink {

namespace {

constexpr double kPsPerSecond = 1e12;
constexpr double kChunkSeconds = 10.0;

// Poisson arrivals via exponential gaps, always generated over the full
// chunk span and filtered to the requested window. Chunks are aligned to
// absolute kChunkSeconds boundaries, so any [t0, t0+len) request reproduces
// exactly the same events regardless of how a caller slices the run.
void append_poisson_arrivals(double rate_hz, double chunk_start_s, double chunk_len_s,
                             double keep_begin_s, double keep_end_s, Rng& rng,
                             std::uint32_t pair_index, EventKind kind,
                             std::vector<PairEvent>& out) {
    if (rate_hz <= 0.0)
        return;
    double t = chunk_start_s + rng.exponential(rate_hz);
    const double end = chunk_start_s + chunk_len_s;
    while (t < end) {
        if (t >= keep_begin_s && t < keep_end_s)
            out.push_back({t * kPsPerSecond, pair_index, kind});
        t += rng.exponential(rate_hz);
    }
}

constexpr std::uint64_t kStreamPair = 0;
constexpr std::uint64_t kStreamNoiseS = 1;
constexpr std::uint64_t kStreamNoiseI = 2;

} // namespace

double pair_rate(double pump_power_mw, const ChannelPair& pair, bool single_nanowire) {
    if (pump_power_mw < 0.0)
        throw std::invalid_argument("pair_rate: negative pump power");
    const double a_eff = single_nanowire ? 2.0 * pair.a : pair.a;
    return a_eff * pump_power_mw * pump_power_mw;
}

double singles_rate(double pump_power_mw, const ChannelPair& pair, Arm arm,
                    bool single_nanowire) {
    const double b = arm == Arm::signal ? pair.b_s : pair.b_i;
    const double c = arm == Arm::signal ? pair.c_s : pair.c_i;
    return pair_rate(pump_power_mw, pair, single_nanowire) + b * pump_power_mw + c;
}

std::vector<PairEvent> generate_events(const SourceConfig& cfg, const ChannelPair& pair,
                                       double t0_s, double duration_s) {
    if (duration_s < 0.0)
        throw std::invalid_argument("generate_events: negative duration");

    const double p = cfg.pump_power_mw;
    const double r_pair = pair_rate(p, pair, cfg.single_nanowire);
    const double r_noise_s = pair.b_s * p + pair.c_s;
    const double r_noise_i = pair.b_i * p + pair.c_i;

    std::vector<PairEvent> events;
    events.reserve(static_cast<std::size_t>((r_pair + r_noise_s + r_noise_i) * duration_s * 1.1) + 16);

    const auto pair_id = static_cast<std::uint64_t>(pair.index);
    const std::int64_t chunk0 = static_cast<std::int64_t>(std::floor(t0_s / kChunkSeconds));
    const std::int64_t chunk1 =
        static_cast<std::int64_t>(std::ceil((t0_s + duration_s) / kChunkSeconds));
    const double keep_begin = t0_s;
    const double keep_end = t0_s + duration_s;
    for (std::int64_t chunk = chunk0; chunk < chunk1; ++chunk) {
        const double c_start = static_cast<double>(chunk) * kChunkSeconds;
        const auto cid = static_cast<std::uint64_t>(chunk);

        Rng rng_pair(derive_seed(cfg.rng_seed, pair_id, kStreamPair, cid));
        append_poisson_arrivals(r_pair, c_start, kChunkSeconds, keep_begin, keep_end,
                                rng_pair, pair_id, EventKind::pair, events);
        Rng rng_s(derive_seed(cfg.rng_seed, pair_id, kStreamNoiseS, cid));
        append_poisson_arrivals(r_noise_s, c_start, kChunkSeconds, keep_begin, keep_end,
                                rng_s, pair_id, EventKind::noise_s, events);
        Rng rng_i(derive_seed(cfg.rng_seed, pair_id, kStreamNoiseI, cid));
        append_poisson_arrivals(r_noise_i, c_start, kChunkSeconds, keep_begin, keep_end,
                                rng_i, pair_id, EventKind::noise_i, events);
    }

    std::sort(events.begin(), events.end(), [](const PairEvent& a, const PairEvent& b) {
        if (a.t_true_ps != b.t_true_ps)
            return a.t_true_ps < b.t_true_ps;
        if (a.pair_index != b.pair_index)
            return a.pair_index < b.pair_index;
        return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    });
    return events;
}

std::vector<PairEvent> generate_events(const SourceConfig& cfg, double duration_s) {
    std::vector<PairEvent> all;
    for (const ChannelPair& pair : cfg.pairs) {
        std::vector<PairEvent> e = generate_events(cfg, pair, 0.0, duration_s);
        all.insert(all.end(), e.begin(), e.end());
    }
    std::sort(all.begin(), all.end(), [](const PairEvent& a, const PairEvent& b) {
        if (a.t_true_ps != b.t_true_ps)
            return a.t_true_ps < b.t_true_ps;
        if (a.pair_index != b.pair_index)
            return a.pair_index < b.pair_index;
        return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    });
    return all;
}

OutcomeProbabilities outcome_probabilities(double theta_a_rad, double theta_b_rad,
                                           const SourceConfig& cfg) {
    if (cfg.visibility < 0.0 || cfg.visibility > 1.0)
        throw std::invalid_argument("outcome_probabilities: visibility outside [0,1]");
    const double e_ideal = std::cos(2 * theta_a_rad) * std::cos(2 * theta_b_rad) +
                           std::cos(cfg.phase_theta) * std::sin(2 * theta_a_rad) *
                               std::sin(2 * theta_b_rad);
    const double e = cfg.visibility * e_ideal;
    if (std::abs(e) > 1.0 + 1e-12)
        throw std::logic_error("outcome_probabilities: |E| > 1, inconsistent model");

    OutcomeProbabilities out;
    out.e_model = e;
    const double same = (1.0 + e) / 4.0;
    const double diff = (1.0 - e) / 4.0;
    out.p = {same, diff, diff, same}; // ++, +-, -+, --
    return out;
}

Outcome sample_polarization_outcome(double theta_a_rad, double theta_b_rad,
                                    const SourceConfig& cfg, Rng& rng) {
    const OutcomeProbabilities probs = outcome_probabilities(theta_a_rad, theta_b_rad, cfg);
    const double u = rng.uniform();
    double acc = 0.0;
    static constexpr Outcome table[4] = {{+1, +1}, {+1, -1}, {-1, +1}, {-1, -1}};
    for (int k = 0; k < 4; ++k) {
        acc += probs.p[k];
        if (u < acc)
            return table[k];
    }
    return table[3];
}

} // namespace pairlink
