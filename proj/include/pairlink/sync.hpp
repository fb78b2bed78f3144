#pragma once

#include "pairlink/coincidence.hpp"
#include "pairlink/time_tags.hpp"

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace pairlink {

class SyncError : public std::runtime_error {
public:
    SyncError(std::string msg, DelayHistogram scanned = {})
        : std::runtime_error(std::move(msg)), histogram(std::move(scanned)) {}
    DelayHistogram histogram; // the scan that failed to show a peak
};

struct SyncOptions {
    std::int64_t search_half_range_ps = 1'000'000'000; // +-1 ms initial scan
    std::int64_t coarse_bin_ps = 1000;
    std::int64_t initial_fine_half_range_ps = 50'000; // refine around coarse peak
    std::int64_t fine_bin_ps = kDefaultResolutionPs;
    std::int64_t fine_half_range_ps = 10'000; // +-10 ns per-block drift window
    int max_consecutive_failures = 5;
};

struct SyncResult {
    std::vector<double> delta_T_ps; // fitted per-block delay dT_i
    std::vector<double> delta_t_ps; // dt_i = dT_i - dT_{i-1}; index 0 is 0
    std::vector<double> fit_fwhm_ps;
    std::vector<char> flagged;      // hold-last blocks, excluded from Allan by default
    double allan_var_ns2 = 0.0;     // flagged increments excluded
    double allan_var_all_ns2 = 0.0; // every increment
    bool correction_applied = false;

    std::size_t blocks() const { return delta_T_ps.size(); }
    std::size_t flagged_count() const;
};

// Coarse-to-fine scan of the first block pair + Gaussian fit; returns the
// fitted peak center dT_1. Throws SyncError (with the scanned histogram
// attached) when nothing stands above the accidental floor.
double find_initial_offset(std::span<const TimeTag> block_a, std::span<const TimeTag> block_b,
                           std::int64_t search_half_range_ps,
                           const SyncOptions& opts = {});

// Iterative per-block tracking: block i >= 1 is scanned only within
// +-fine_half_range of dT_{i-1}, so the cost per block is independent of the
// absolute offset. Per-block failures hold the last value and are flagged;
// more than max_consecutive_failures in a row is a sync loss.
SyncResult track_drift(const std::vector<TagBlock>& blocks_a,
                       const std::vector<TagBlock>& blocks_b, double initial_offset_ps,
                       const SyncOptions& opts = {});

// Two-sample variance at tau = 1 s:
//   sigma^2 = 1/(2(N-1)) * sum (dT_{i+1} - dT_i)^2, reported in ns^2.
// Throws std::invalid_argument for N < 2.
double allan_variance(std::span<const double> delta_T_ps);

// Same, skipping increments whose either endpoint is flagged.
double allan_variance_excluding(std::span<const double> delta_T_ps,
                                std::span<const char> flagged);

// Piecewise-constant correction: tags in block i shift by -round(dT_i).
// Tag count is preserved; output is re-sorted if block-boundary shifts
// reorder tags. Throws when the stream has blocks the sync never covered.
TagStream apply_correction(const TagStream& stream_b, const SyncResult& sync);

struct SyncPipelineResult {
    double initial_offset_ps = 0.0;
    SyncResult before;     // tracked on the raw streams
    SyncResult after;      // re-tracked on the corrected stream
    TagStream corrected;
};

// find_initial_offset + track_drift + apply_correction + re-track: the whole
// synchronization procedure over two acquisitions.
SyncPipelineResult run_sync_pipeline(const TagStream& a, const TagStream& b,
                                     SyncOptions opts = {});

void write_sync_csv(const SyncResult& r, const std::filesystem::path& path);

} // namespace pairlink
