#include "pairlink/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pairlink {

namespace {

constexpr double kPsPerSecond = 1e12;
constexpr double kChunkSeconds = 10.0;

// rng stream ids within one run seed
constexpr std::uint64_t kStreamOutcome = 0x07;
constexpr std::uint64_t kStreamNoiseChannelA = 0x08;
constexpr std::uint64_t kStreamNoiseChannelB = 0x09;
constexpr std::uint64_t kStreamLossA = 0x0a;
constexpr std::uint64_t kStreamLossB = 0x0b;
constexpr std::uint64_t kStreamDetectA = 0x1a;
constexpr std::uint64_t kStreamDetectB = 0x1b;
constexpr std::uint64_t kStreamNoiseDetectA = 0x2a;
constexpr std::uint64_t kStreamNoiseDetectB = 0x2b;
constexpr std::uint64_t kStreamDarksA = 0x3a;
constexpr std::uint64_t kStreamDarksB = 0x3b;

std::uint8_t outcome_channel(int outcome) { return outcome > 0 ? 0 : 1; }

} // namespace

TwoNodeRun simulate_two_node(const SourceConfig& source, const ChannelPair& pair,
                             const NodeConfig& alice, const NodeConfig& bob,
                             double duration_s, std::uint64_t run_seed,
                             const std::optional<AnalyzerSettings>& settings) {
    if (duration_s < 0.0)
        throw std::invalid_argument("simulate_two_node: negative duration");

    const int n_channels = settings ? 2 : 1;

    // Pair photons go through the full loss chain, each arm an independent
    // Bernoulli, because the coincidence/singles correlation lives there.
    // Arm-local noise is uncorrelated with everything, so it is generated
    // pre-thinned at the detected rate (Poisson thinning is exact) and then
    // skips the loss and efficiency draws; this keeps 600 s runs from
    // materializing ~1e9 on-chip noise events that the chain would discard.
    const double p_arm_alice = alice.link.transmittance() * alice.detector.efficiency;
    const double p_arm_bob = bob.link.transmittance() * bob.detector.efficiency;

    ChannelPair pair_only = pair;
    pair_only.b_s = pair_only.b_i = 0.0;
    pair_only.c_s = pair_only.c_i = 0.0;

    ChannelPair noise_only = pair;
    noise_only.a = 0.0;
    noise_only.b_s = pair.b_s * p_arm_bob;   // signal arm -> Bob
    noise_only.c_s = pair.c_s * p_arm_bob;
    noise_only.b_i = pair.b_i * p_arm_alice; // idler arm -> Alice
    noise_only.c_i = pair.c_i * p_arm_alice;

    LinkConfig alice_delay_only = alice.link;
    alice_delay_only.loss_db_per_km = 0.0;
    alice_delay_only.extra_loss_db = 0.0;
    LinkConfig bob_delay_only = bob.link;
    bob_delay_only.loss_db_per_km = 0.0;
    bob_delay_only.extra_loss_db = 0.0;

    DetectorConfig alice_det_thinned = alice.detector;
    alice_det_thinned.efficiency = 1.0;
    DetectorConfig bob_det_thinned = bob.detector;
    bob_det_thinned.efficiency = 1.0;

    const double bob_delay_s = static_cast<double>(bob.link.delay_ps()) / kPsPerSecond;
    const double alice_delay_s = static_cast<double>(alice.link.delay_ps()) / kPsPerSecond;
    const ClockTrajectory traj_a(alice.clock, duration_s + alice_delay_s + 1.0);
    const ClockTrajectory traj_b(bob.clock, duration_s + bob_delay_s + 1.0);

    TwoNodeRun run;
    run.alice.resolution_ps = alice.detector.resolution_ps;
    run.bob.resolution_ps = bob.detector.resolution_ps;
    run.truth.alice_delay_ps = alice.link.delay_ps();
    run.truth.bob_delay_ps = bob.link.delay_ps();

    const double p = source.pump_power_mw;
    const double r_pair = pair_rate(p, pair, source.single_nanowire);
    const double exp_alice =
        (r_pair * p_arm_alice + noise_only.b_i * p + noise_only.c_i +
         alice.detector.dark_rate_hz * n_channels) *
        duration_s;
    const double exp_bob = (r_pair * p_arm_bob + noise_only.b_s * p + noise_only.c_s +
                            bob.detector.dark_rate_hz * n_channels) *
                           duration_s;
    run.alice.tags.reserve(static_cast<std::size_t>(exp_alice * 1.05) + 1024);
    run.bob.tags.reserve(static_cast<std::size_t>(exp_bob * 1.05) + 1024);

    const std::size_t n_chunks =
        duration_s > 0.0 ? static_cast<std::size_t>(std::ceil(duration_s / kChunkSeconds)) : 0;
    for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) {
        const double t0 = static_cast<double>(chunk) * kChunkSeconds;
        const double len = std::min(kChunkSeconds, duration_s - t0);

        // correlated pair emissions through the full chain
        {
            const std::vector<PairEvent> events = generate_events(source, pair_only, t0, len);
            std::vector<ArmEvent> alice_arm, bob_arm;
            alice_arm.reserve(events.size());
            bob_arm.reserve(events.size());
            Rng outcome_rng(derive_seed(run_seed, kStreamOutcome, chunk));
            for (const PairEvent& e : events) {
                Outcome o{+1, +1};
                if (settings)
                    o = sample_polarization_outcome(settings->theta_a_rad,
                                                    settings->theta_b_rad, source,
                                                    outcome_rng);
                alice_arm.push_back({e.t_true_ps, outcome_channel(o.a)});
                bob_arm.push_back({e.t_true_ps, outcome_channel(o.b)});
            }
            run.truth.pair_events += events.size();

            Rng loss_a(derive_seed(run_seed, kStreamLossA, chunk));
            const std::vector<ArmEvent> alice_prop = propagate(alice_arm, alice.link, loss_a);
            Rng loss_b(derive_seed(run_seed, kStreamLossB, chunk));
            const std::vector<ArmEvent> bob_prop = propagate(bob_arm, bob.link, loss_b);

            Rng det_a(derive_seed(run_seed, kStreamDetectA, chunk));
            detect_into(alice_prop, alice.detector, traj_a, det_a, run.alice.tags);
            Rng det_b(derive_seed(run_seed, kStreamDetectB, chunk));
            detect_into(bob_prop, bob.detector, traj_b, det_b, run.bob.tags);
        }

        // pre-thinned arm-local noise: delay shift + jitter/clock only
        {
            const std::vector<PairEvent> events = generate_events(source, noise_only, t0, len);
            std::vector<ArmEvent> alice_arm, bob_arm;
            Rng ch_a(derive_seed(run_seed, kStreamNoiseChannelA, chunk));
            Rng ch_b(derive_seed(run_seed, kStreamNoiseChannelB, chunk));
            for (const PairEvent& e : events) {
                if (e.kind == EventKind::noise_i) {
                    const std::uint8_t ch =
                        n_channels == 2 ? (ch_a.bernoulli(0.5) ? 0 : 1) : 0;
                    alice_arm.push_back({e.t_true_ps, ch});
                    ++run.truth.noise_i_events;
                } else if (e.kind == EventKind::noise_s) {
                    const std::uint8_t ch =
                        n_channels == 2 ? (ch_b.bernoulli(0.5) ? 0 : 1) : 0;
                    bob_arm.push_back({e.t_true_ps, ch});
                    ++run.truth.noise_s_events;
                }
            }

            Rng unused_a(0), unused_b(0); // zero-loss propagate draws nothing
            const std::vector<ArmEvent> alice_prop =
                propagate(alice_arm, alice_delay_only, unused_a);
            const std::vector<ArmEvent> bob_prop = propagate(bob_arm, bob_delay_only, unused_b);

            Rng det_a(derive_seed(run_seed, kStreamNoiseDetectA, chunk));
            detect_into(alice_prop, alice_det_thinned, traj_a, det_a, run.alice.tags);
            Rng det_b(derive_seed(run_seed, kStreamNoiseDetectB, chunk));
            detect_into(bob_prop, bob_det_thinned, traj_b, det_b, run.bob.tags);
        }
    }

    for (int ch = 0; ch < n_channels; ++ch) {
        Rng dark_a(derive_seed(run_seed, kStreamDarksA, static_cast<std::uint64_t>(ch)));
        append_dark_counts(alice.detector, static_cast<std::uint8_t>(ch), 0.0, duration_s,
                           dark_a, run.alice.tags);
        Rng dark_b(derive_seed(run_seed, kStreamDarksB, static_cast<std::uint64_t>(ch)));
        append_dark_counts(bob.detector, static_cast<std::uint8_t>(ch), 0.0, duration_s,
                           dark_b, run.bob.tags);
    }

    std::sort(run.alice.tags.begin(), run.alice.tags.end());
    std::sort(run.bob.tags.begin(), run.bob.tags.end());

    const auto seconds = static_cast<std::size_t>(std::ceil(duration_s)) + 1;
    run.truth.clock_alice_ps.reserve(seconds);
    run.truth.clock_bob_ps.reserve(seconds);
    for (std::size_t k = 0; k < seconds; ++k) {
        run.truth.clock_alice_ps.push_back(traj_a.offset_at(static_cast<double>(k)));
        run.truth.clock_bob_ps.push_back(traj_b.offset_at(static_cast<double>(k)));
    }
    return run;
}

} // namespace pairlink
