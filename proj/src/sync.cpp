#include "pairlink/sync.hpp"

#include "pairlink/util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace pairlink {

namespace {

// Per-block estimate of the peak center within an already-scanned histogram.
// Gaussian fit first; centroid of bins above half maximum when the fit fails
// but the peak is still significant; nullopt otherwise.
std::optional<double> estimate_block_center(const DelayHistogram& hist, double& fwhm_out) {
    if (std::optional<PeakFit> fit = fit_gaussian_peak(hist)) {
        fwhm_out = fit->fwhm_ps;
        return fit->center_ps;
    }
    if (hist.counts.empty())
        return std::nullopt;

    std::vector<double> sorted(hist.counts.begin(), hist.counts.end());
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double baseline = sorted[sorted.size() / 2];
    const double max_count = static_cast<double>(hist.counts[hist.argmax()]);
    if (max_count <= baseline + 5.0 * std::max(std::sqrt(baseline), 1.0))
        return std::nullopt;

    const double half = baseline + (max_count - baseline) / 2.0;
    double weight = 0.0, moment = 0.0;
    for (std::size_t k = 0; k < hist.counts.size(); ++k) {
        const double c = static_cast<double>(hist.counts[k]);
        if (c > half) {
            const double w = c - baseline;
            weight += w;
            moment += w * static_cast<double>(hist.bin_center(k));
        }
    }
    if (weight <= 0.0)
        return std::nullopt;
    fwhm_out = 0.0; // centroid path carries no width estimate
    return moment / weight;
}

} // namespace

std::size_t SyncResult::flagged_count() const {
    return static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), char(1)));
}

double find_initial_offset(std::span<const TimeTag> block_a, std::span<const TimeTag> block_b,
                           std::int64_t search_half_range_ps, const SyncOptions& opts) {
    PeakSearchConfig cfg;
    cfg.coarse_bin_ps = opts.coarse_bin_ps;
    cfg.fine_bin_ps = opts.fine_bin_ps;
    cfg.fine_half_range_ps = opts.initial_fine_half_range_ps;

    PeakSearchResult search = coarse_to_fine_peak_search(
        block_a, block_b, -search_half_range_ps, search_half_range_ps, cfg);
    if (!search.fit) {
        DelayHistogram flat =
            search.fine.counts.empty() ? std::move(search.coarse) : std::move(search.fine);
        throw SyncError("find_initial_offset: no coincidence peak above the accidental floor",
                        std::move(flat));
    }
    return search.fit->center_ps;
}

SyncResult track_drift(const std::vector<TagBlock>& blocks_a,
                       const std::vector<TagBlock>& blocks_b, double initial_offset_ps,
                       const SyncOptions& opts) {
    const std::size_t n = std::min(blocks_a.size(), blocks_b.size());
    if (n == 0)
        throw SyncError("track_drift: no blocks to track");

    SyncResult r;
    r.delta_T_ps.reserve(n);
    r.delta_t_ps.reserve(n);
    r.fit_fwhm_ps.reserve(n);
    r.flagged.reserve(n);

    r.delta_T_ps.push_back(initial_offset_ps);
    r.delta_t_ps.push_back(0.0);
    r.fit_fwhm_ps.push_back(0.0);
    r.flagged.push_back(0);

    int consecutive_failures = 0;
    for (std::size_t i = 1; i < n; ++i) {
        const double prev = r.delta_T_ps.back();
        const std::int64_t center = std::llround(prev);
        const DelayHistogram hist =
            delay_scan(blocks_a[i].tags, blocks_b[i].tags, center - opts.fine_half_range_ps,
                       center + opts.fine_half_range_ps, opts.fine_bin_ps);

        double fwhm = 0.0;
        if (std::optional<double> est = estimate_block_center(hist, fwhm)) {
            r.delta_T_ps.push_back(*est);
            r.fit_fwhm_ps.push_back(fwhm);
            r.flagged.push_back(0);
            consecutive_failures = 0;
        } else {
            // hold-last-value, flagged; Allan skips these by default
            r.delta_T_ps.push_back(prev);
            r.fit_fwhm_ps.push_back(0.0);
            r.flagged.push_back(1);
            if (++consecutive_failures > opts.max_consecutive_failures)
                throw SyncError("track_drift: sync loss, " +
                                    std::to_string(consecutive_failures) +
                                    " consecutive blocks without a peak (block " +
                                    std::to_string(i) + ")",
                                hist);
        }
        r.delta_t_ps.push_back(r.delta_T_ps[i] - r.delta_T_ps[i - 1]);
    }

    if (n >= 2) {
        r.allan_var_all_ns2 = allan_variance(r.delta_T_ps);
        r.allan_var_ns2 = allan_variance_excluding(r.delta_T_ps, r.flagged);
    } else {
        r.allan_var_all_ns2 = r.allan_var_ns2 = std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

double allan_variance(std::span<const double> delta_T_ps) {
    const std::size_t n = delta_T_ps.size();
    if (n < 2)
        throw std::invalid_argument("allan_variance: need at least 2 blocks");
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double d = delta_T_ps[i + 1] - delta_T_ps[i];
        sum += d * d;
    }
    const double var_ps2 = sum / (2.0 * static_cast<double>(n - 1));
    return var_ps2 / 1e6; // ps^2 -> ns^2
}

double allan_variance_excluding(std::span<const double> delta_T_ps,
                                std::span<const char> flagged) {
    const std::size_t n = delta_T_ps.size();
    if (n < 2 || flagged.size() != n)
        throw std::invalid_argument("allan_variance_excluding: bad input lengths");
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (flagged[i] || flagged[i + 1])
            continue;
        const double d = delta_T_ps[i + 1] - delta_T_ps[i];
        sum += d * d;
        ++used;
    }
    if (used == 0)
        throw std::invalid_argument("allan_variance_excluding: no unflagged increments");
    return sum / (2.0 * static_cast<double>(used)) / 1e6;
}

TagStream apply_correction(const TagStream& stream_b, const SyncResult& sync) {
    TagStream out;
    out.resolution_ps = stream_b.resolution_ps;
    out.pps_period_ps = stream_b.pps_period_ps;
    out.metadata = stream_b.metadata;
    out.metadata["sync_corrected"] = "1";
    out.tags.reserve(stream_b.tags.size());

    const std::int64_t period = stream_b.pps_period_ps;
    const std::size_t covered = sync.delta_T_ps.size();
    if (covered == 0)
        throw std::invalid_argument("apply_correction: empty sync result");
    for (const TimeTag& t : stream_b.tags) {
        if (t.t_ps < 0)
            throw std::invalid_argument("apply_correction: negative timestamp in input");
        auto block = static_cast<std::size_t>(t.t_ps / period);
        // The link delay spills a sliver of the last second into one extra
        // block that the tracker never saw; it inherits the last correction.
        // A gap wider than that means the sync belongs to a different run.
        if (block >= covered) {
            if (block > covered)
                throw std::invalid_argument("apply_correction: block " + std::to_string(block) +
                                            " not covered by the sync result");
            block = covered - 1;
        }
        out.tags.push_back({t.t_ps - std::llround(sync.delta_T_ps[block]), t.channel});
    }
    if (!is_time_sorted(out.tags))
        std::sort(out.tags.begin(), out.tags.end());
    return out;
}

SyncPipelineResult run_sync_pipeline(const TagStream& a, const TagStream& b, SyncOptions opts) {
    if (opts.fine_bin_ps == kDefaultResolutionPs)
        opts.fine_bin_ps = std::max(a.resolution_ps, b.resolution_ps);

    const std::vector<TagBlock> blocks_a = split_into_blocks(a);
    const std::vector<TagBlock> blocks_b = split_into_blocks(b);
    if (blocks_a.empty() || blocks_b.empty())
        throw SyncError("run_sync_pipeline: empty stream");

    SyncPipelineResult r;
    r.initial_offset_ps =
        find_initial_offset(blocks_a[0].tags, blocks_b[0].tags, opts.search_half_range_ps, opts);
    r.before = track_drift(blocks_a, blocks_b, r.initial_offset_ps, opts);

    r.corrected = apply_correction(b, r.before);
    r.before.correction_applied = true;

    // Re-track against the corrected stream: the residual delay series is
    // the calibrated one whose Allan variance quantifies the sync quality.
    // Corrected tags can sit just below zero, so blocks are re-derived from
    // a clamped copy for segmentation only.
    TagStream corrected_view = r.corrected;
    if (!corrected_view.tags.empty() && corrected_view.tags.front().t_ps < 0) {
        for (TimeTag& t : corrected_view.tags)
            if (t.t_ps < 0)
                t.t_ps = 0;
        std::sort(corrected_view.tags.begin(), corrected_view.tags.end());
    }
    const std::vector<TagBlock> blocks_c = split_into_blocks(corrected_view);
    double offset_after = 0.0;
    try {
        offset_after =
            find_initial_offset(blocks_a[0].tags, blocks_c[0].tags, opts.search_half_range_ps, opts);
    } catch (const SyncError&) {
        offset_after = 0.0; // first corrected block may be sparse; track from 0
    }
    r.after = track_drift(blocks_a, blocks_c, offset_after, opts);
    return r;
}

void write_sync_csv(const SyncResult& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "block_index,delta_T_ps,delta_t_ps,fit_fwhm_ps,flagged\n";
    for (std::size_t i = 0; i < r.delta_T_ps.size(); ++i) {
        out << i << ',' << format_double(r.delta_T_ps[i]) << ','
            << format_double(r.delta_t_ps[i]) << ',' << format_double(r.fit_fwhm_ps[i]) << ','
            << static_cast<int>(r.flagged[i]) << '\n';
    }
    if (!out)
        throw std::runtime_error("write failure on " + path.string());
}

} // namespace pairlink
