#pragma once

#include "pairlink/time_tags.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace pairlink {

struct DelayHistogram {
    std::int64_t start_ps = 0;  // left edge of bin 0
    std::int64_t bin_ps = 1;
    std::vector<std::uint64_t> counts;

    std::int64_t bin_center(std::size_t i) const {
        return start_ps + static_cast<std::int64_t>(i) * bin_ps + bin_ps / 2;
    }
    std::uint64_t total() const;
    // argmax bin; ties resolved toward the lowest delay
    std::size_t argmax() const;
};

struct PeakFit {
    double center_ps = 0.0;
    double fwhm_ps = 0.0;
    double amplitude = 0.0;
    double baseline = 0.0;
    bool degenerate_width = false; // single-bin peak, width unresolved
};

struct CoincidenceResult {
    std::uint64_t cc = 0;
    double accidentals = 0.0; // estimated count in one window over the same span
    double car = 0.0;         // cc / accidentals, 0 when accidentals == 0
    std::int64_t window_ps = 0;
    std::int64_t delay_ps = 0;
};

// Pairs with |t_b - t_a - delay| <= window/2, greedy earliest match, each tag
// used at most once; O(n_a + n_b). Throws std::invalid_argument on unsorted
// input or window <= 0.
std::uint64_t count_coincidences(std::span<const TimeTag> a, std::span<const TimeTag> b,
                                 std::int64_t delay_ps, std::int64_t window_ps);

// Histogram of pairwise differences t_b - t_a over [range_lo, range_hi),
// merge-window sweep (never all-pairs). OpenMP-parallel over the a stream;
// counts are integers so the reduction order cannot change the result.
DelayHistogram delay_scan(std::span<const TimeTag> a, std::span<const TimeTag> b,
                          std::int64_t range_lo_ps, std::int64_t range_hi_ps,
                          std::int64_t bin_ps);

// Mean in-window pair count over n_offsets delays displaced >= 10 windows
// from `delay_ps` (spacing one window, positive side).
double estimate_accidentals(std::span<const TimeTag> a, std::span<const TimeTag> b,
                            std::int64_t delay_ps, std::int64_t window_ps,
                            int n_offsets);

// Levenberg-Marquardt fit of amplitude*exp(-(x-c)^2/(2 sigma^2)) + baseline.
// nullopt when no significant peak exists (max <= baseline + 5*sqrt(baseline)),
// which callers use as the sync-engine fallback trigger.
std::optional<PeakFit> fit_gaussian_peak(const DelayHistogram& h);

struct PeakSearchConfig {
    std::int64_t coarse_bin_ps = 1000;  // 1 ns first pass
    std::int64_t fine_bin_ps = kDefaultResolutionPs;
    std::int64_t fine_half_range_ps = 50'000; // +-50 ns around the coarse peak
};

struct PeakSearchResult {
    std::optional<PeakFit> fit;        // nullopt: no significant peak anywhere
    DelayHistogram coarse;             // kept so sync failures can attach it
    DelayHistogram fine;
};

// Coarse 1 ns scan over the full range, then a fine scan at resolution bins
// around the coarse argmax. A full-range scan at 156 ps bins would be ~6e9
// bins for a +-0.5 s range; this is the documented two-stage replacement.
PeakSearchResult coarse_to_fine_peak_search(std::span<const TimeTag> a,
                                            std::span<const TimeTag> b,
                                            std::int64_t range_lo_ps,
                                            std::int64_t range_hi_ps,
                                            const PeakSearchConfig& cfg = {});

void write_histogram_csv(const DelayHistogram& h, const std::filesystem::path& path);

// Worker cap shared by every OpenMP kernel: min(omp_get_max_threads(),
// PAIRLINK_THREADS) when the env var is set and positive.
int worker_count();

namespace ref {

// O(n^2) brute-force greedy earliest-match counter. Test oracle and benchmark
// baseline for count_coincidences; must stay independent of the kernel path.
std::uint64_t count_coincidences_bruteforce(std::span<const TimeTag> a,
                                            std::span<const TimeTag> b,
                                            std::int64_t delay_ps,
                                            std::int64_t window_ps);

// All-pairs histogram, single thread; oracle and baseline for delay_scan.
DelayHistogram delay_scan_naive(std::span<const TimeTag> a, std::span<const TimeTag> b,
                                std::int64_t range_lo_ps, std::int64_t range_hi_ps,
                                std::int64_t bin_ps);

} // namespace ref

} // namespace pairlink
