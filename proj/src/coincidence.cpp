#include "pairlink/coincidence.hpp"

#include "pairlink/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pairlink {

namespace {

// |d| <= window/2 without truncating odd windows
inline bool in_window(std::int64_t d, std::int64_t window_ps) {
    return 2 * d >= -window_ps && 2 * d <= window_ps;
}

inline std::int64_t time_of(const TimeTag& t) { return t.t_ps; }

std::size_t lower_bound_time(std::span<const TimeTag> tags, std::int64_t t) {
    return static_cast<std::size_t>(
        std::lower_bound(tags.begin(), tags.end(), t,
                         [](const TimeTag& tag, std::int64_t v) { return tag.t_ps < v; }) -
        tags.begin());
}

void check_sorted(std::span<const TimeTag> a, std::span<const TimeTag> b, const char* who) {
    if (!is_time_sorted(a) || !is_time_sorted(b))
        throw std::invalid_argument(std::string(who) + ": unsorted input stream");
}

} // namespace

int worker_count() {
#ifdef _OPENMP
    static const int cap = [] {
        int n = omp_get_max_threads();
        if (const char* env = std::getenv("PAIRLINK_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v > 0 && v < n)
                n = static_cast<int>(v);
        }
        return n > 0 ? n : 1;
    }();
    return cap;
#else
    return 1;
#endif
}

std::uint64_t DelayHistogram::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::size_t DelayHistogram::argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i)
        if (counts[i] > counts[best])
            best = i; // strict: ties keep the lowest delay
    return best;
}

std::uint64_t count_coincidences(std::span<const TimeTag> a, std::span<const TimeTag> b,
                                 std::int64_t delay_ps, std::int64_t window_ps) {
    if (window_ps <= 0)
        throw std::invalid_argument("count_coincidences: window_ps must be positive");
    check_sorted(a, b, "count_coincidences");

    // Greedy earliest match. A b tag that falls below the window for the
    // current a can never match a later a (d only shrinks), so it is final
    // to discard it; symmetrically for a.
    std::uint64_t count = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const std::int64_t d = time_of(b[j]) - time_of(a[i]) - delay_ps;
        if (2 * d < -window_ps) {
            ++j;
        } else if (2 * d > window_ps) {
            ++i;
        } else {
            ++count;
            ++i;
            ++j;
        }
    }
    return count;
}

DelayHistogram delay_scan(std::span<const TimeTag> a, std::span<const TimeTag> b,
                          std::int64_t range_lo_ps, std::int64_t range_hi_ps,
                          std::int64_t bin_ps) {
    if (bin_ps <= 0 || range_hi_ps <= range_lo_ps)
        throw std::invalid_argument("delay_scan: nonpositive bin or range span");
    check_sorted(a, b, "delay_scan");

    const std::size_t n_bins =
        static_cast<std::size_t>((range_hi_ps - range_lo_ps + bin_ps - 1) / bin_ps);
    DelayHistogram hist;
    hist.start_ps = range_lo_ps;
    hist.bin_ps = bin_ps;
    hist.counts.assign(n_bins, 0);
    if (a.empty() || b.empty())
        return hist;

    const int threads = worker_count();

#ifdef _OPENMP
#pragma omp parallel num_threads(threads)
    {
        const int tid = omp_get_thread_num();
        const int nth = omp_get_num_threads();
#else
    {
        const int tid = 0;
        const int nth = 1;
        (void)threads;
#endif
        const std::size_t chunk = (a.size() + nth - 1) / nth;
        const std::size_t ibeg = std::min(a.size(), chunk * static_cast<std::size_t>(tid));
        const std::size_t iend = std::min(a.size(), ibeg + chunk);

        std::vector<std::uint64_t> local(n_bins, 0);
        if (ibeg < iend) {
            // Sliding window of b candidates with t_b - t_a in [lo, hi);
            // both edges advance monotonically as a advances.
            std::size_t jlo = lower_bound_time(b, time_of(a[ibeg]) + range_lo_ps);
            std::size_t jhi = jlo;
            for (std::size_t i = ibeg; i < iend; ++i) {
                const std::int64_t ta = time_of(a[i]);
                while (jlo < b.size() && time_of(b[jlo]) - ta < range_lo_ps)
                    ++jlo;
                if (jhi < jlo)
                    jhi = jlo;
                while (jhi < b.size() && time_of(b[jhi]) - ta < range_hi_ps)
                    ++jhi;
                for (std::size_t j = jlo; j < jhi; ++j) {
                    const std::int64_t d = time_of(b[j]) - ta;
                    const std::size_t bin =
                        static_cast<std::size_t>((d - range_lo_ps) / bin_ps);
                    if (bin < n_bins)
                        ++local[bin];
                }
            }
        }
#ifdef _OPENMP
#pragma omp critical(pairlink_delay_scan_merge)
#endif
        {
            for (std::size_t k = 0; k < n_bins; ++k)
                hist.counts[k] += local[k];
        }
    }
    return hist;
}

double estimate_accidentals(std::span<const TimeTag> a, std::span<const TimeTag> b,
                            std::int64_t delay_ps, std::int64_t window_ps,
                            int n_offsets) {
    if (n_offsets < 1)
        throw std::invalid_argument("estimate_accidentals: n_offsets must be >= 1");
    if (window_ps <= 0)
        throw std::invalid_argument("estimate_accidentals: window_ps must be positive");
    if (a.empty() || b.empty())
        return 0.0;

    // Displacements start 10 windows past the peak and step by one window.
    const std::int64_t max_shift = (10 + n_offsets) * window_ps;
    const std::int64_t span_a = time_of(a.back()) - time_of(a.front());
    const std::int64_t span_b = time_of(b.back()) - time_of(b.front());
    if (max_shift >= std::min(span_a, span_b))
        throw std::invalid_argument("estimate_accidentals: streams shorter than displacement span");

    std::uint64_t sum = 0;
    for (int k = 0; k < n_offsets; ++k)
        sum += count_coincidences(a, b, delay_ps + (10 + k) * window_ps, window_ps);
    return static_cast<double>(sum) / n_offsets;
}

namespace {

double chi2_of(const std::vector<double>& x, const std::vector<double>& y,
               double A, double c, double s, double B) {
    double chi2 = 0.0;
    const double inv2s2 = 1.0 / (2.0 * s * s);
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double u = x[k] - c;
        const double r = A * std::exp(-u * u * inv2s2) + B - y[k];
        chi2 += r * r;
    }
    return chi2;
}

} // namespace

std::optional<PeakFit> fit_gaussian_peak(const DelayHistogram& h) {
    const std::size_t n = h.counts.size();
    if (n == 0)
        return std::nullopt;

    const std::size_t peak = h.argmax();
    const double max_count = static_cast<double>(h.counts[peak]);

    // Robust baseline from the median; the peak occupies few bins.
    std::vector<double> sorted(h.counts.begin(), h.counts.end());
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    const double baseline0 = sorted[n / 2];

    // Dominance gate; the sqrt floor of 1 keeps near-empty Poisson
    // histograms (baseline ~0.1 counts/bin) from promoting noise spikes.
    if (max_count <= baseline0 + 5.0 * std::max(std::sqrt(baseline0), 1.0))
        return std::nullopt;

    const double amp0 = max_count - baseline0;
    const double half = baseline0 + amp0 / 2.0;
    std::size_t above_lo = peak, above_hi = peak;
    while (above_lo > 0 && static_cast<double>(h.counts[above_lo - 1]) > half)
        --above_lo;
    while (above_hi + 1 < n && static_cast<double>(h.counts[above_hi + 1]) > half)
        ++above_hi;
    const std::size_t above = above_hi - above_lo + 1;

    if (above <= 1) {
        // Width is unresolved below one bin; report the bin itself.
        PeakFit f;
        f.center_ps = static_cast<double>(h.bin_center(peak));
        f.fwhm_ps = static_cast<double>(h.bin_ps);
        f.amplitude = amp0;
        f.baseline = baseline0;
        f.degenerate_width = true;
        return f;
    }

    // Work in x coordinates relative to the initial center for conditioning.
    const double c0 = static_cast<double>(h.bin_center(peak));
    std::vector<double> x(n), y(n);
    for (std::size_t k = 0; k < n; ++k) {
        x[k] = static_cast<double>(h.bin_center(k)) - c0;
        y[k] = static_cast<double>(h.counts[k]);
    }

    double A = amp0;
    double B = baseline0;
    double c = 0.0;
    double s = std::max(static_cast<double>(above) * h.bin_ps / 2.3548200450309493,
                        0.3 * static_cast<double>(h.bin_ps));

    double chi2 = chi2_of(x, y, A, c, s, B);
    double lambda = 1e-3;
    const int max_iter = 200;

    for (int iter = 0; iter < max_iter; ++iter) {
        // Build J^T J and J^T r for params (A, c, s, B).
        std::vector<double> jtj(16, 0.0), jtr(4, 0.0);
        const double inv2s2 = 1.0 / (2.0 * s * s);
        for (std::size_t k = 0; k < n; ++k) {
            const double u = x[k] - c;
            const double g = std::exp(-u * u * inv2s2);
            const double r = A * g + B - y[k];
            const double j0 = g;
            const double j1 = A * g * u / (s * s);
            const double j2 = A * g * u * u / (s * s * s);
            const double j3 = 1.0;
            const double jrow[4] = {j0, j1, j2, j3};
            for (int p = 0; p < 4; ++p) {
                jtr[p] += jrow[p] * r;
                for (int q = p; q < 4; ++q)
                    jtj[p * 4 + q] += jrow[p] * jrow[q];
            }
        }
        for (int p = 0; p < 4; ++p)
            for (int q = 0; q < p; ++q)
                jtj[p * 4 + q] = jtj[q * 4 + p];

        bool stepped = false;
        for (int attempt = 0; attempt < 24 && !stepped; ++attempt) {
            std::vector<double> m = jtj;
            std::vector<double> rhs(4);
            for (int p = 0; p < 4; ++p) {
                m[p * 4 + p] *= 1.0 + lambda;
                rhs[p] = -jtr[p];
            }
            if (!solve_dense(m, rhs, 4)) {
                lambda *= 10.0;
                continue;
            }
            const double A1 = A + rhs[0];
            const double c1 = c + rhs[1];
            const double s1 = s + rhs[2];
            const double B1 = B + rhs[3];
            if (!(s1 > 0.0) || !std::isfinite(A1) || !std::isfinite(c1) ||
                !std::isfinite(s1) || !std::isfinite(B1)) {
                lambda *= 10.0;
                continue;
            }
            const double chi2_1 = chi2_of(x, y, A1, c1, s1, B1);
            if (chi2_1 <= chi2) {
                const double gain = chi2 - chi2_1;
                A = A1;
                c = c1;
                s = s1;
                B = B1;
                chi2 = chi2_1;
                lambda = std::max(lambda / 3.0, 1e-12);
                stepped = true;
                if (gain <= 1e-12 * (chi2 + 1e-30))
                    iter = max_iter; // converged
            } else {
                lambda *= 10.0;
            }
        }
        if (!stepped)
            break; // stalled; accept current params if they are sane
    }

    const double span = static_cast<double>(h.bin_ps) * static_cast<double>(n);
    if (!(A > 0.0) || !std::isfinite(c) || std::abs(c) > span || !(s > 0.0) || s > span)
        return std::nullopt;

    PeakFit f;
    f.center_ps = c0 + c;
    f.fwhm_ps = 2.3548200450309493 * s;
    f.amplitude = A;
    f.baseline = B;
    return f;
}

PeakSearchResult coarse_to_fine_peak_search(std::span<const TimeTag> a,
                                            std::span<const TimeTag> b,
                                            std::int64_t range_lo_ps,
                                            std::int64_t range_hi_ps,
                                            const PeakSearchConfig& cfg) {
    PeakSearchResult out;
    out.coarse = delay_scan(a, b, range_lo_ps, range_hi_ps, cfg.coarse_bin_ps);
    if (out.coarse.total() == 0)
        return out;

    const std::size_t peak = out.coarse.argmax();
    const std::int64_t center = out.coarse.bin_center(peak);
    const std::int64_t lo = center - cfg.fine_half_range_ps;
    const std::int64_t hi = center + cfg.fine_half_range_ps;
    out.fine = delay_scan(a, b, lo, hi, cfg.fine_bin_ps);
    out.fit = fit_gaussian_peak(out.fine);
    return out;
}

void write_histogram_csv(const DelayHistogram& h, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "delay_ps,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i)
        out << h.bin_center(i) << ',' << h.counts[i] << '\n';
    if (!out)
        throw std::runtime_error("write failure on " + path.string());
}

namespace ref {

std::uint64_t count_coincidences_bruteforce(std::span<const TimeTag> a,
                                            std::span<const TimeTag> b,
                                            std::int64_t delay_ps,
                                            std::int64_t window_ps) {
    if (window_ps <= 0)
        throw std::invalid_argument("count_coincidences_bruteforce: window_ps must be positive");
    check_sorted(a, b, "count_coincidences_bruteforce");

    std::vector<char> used(b.size(), 0);
    std::uint64_t count = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (used[j])
                continue;
            const std::int64_t d = time_of(b[j]) - time_of(a[i]) - delay_ps;
            if (2 * d > window_ps)
                break; // b sorted: everything later is further away
            if (in_window(d, window_ps)) {
                used[j] = 1;
                ++count;
                break;
            }
        }
    }
    return count;
}

DelayHistogram delay_scan_naive(std::span<const TimeTag> a, std::span<const TimeTag> b,
                                std::int64_t range_lo_ps, std::int64_t range_hi_ps,
                                std::int64_t bin_ps) {
    if (bin_ps <= 0 || range_hi_ps <= range_lo_ps)
        throw std::invalid_argument("delay_scan_naive: nonpositive bin or range span");
    const std::size_t n_bins =
        static_cast<std::size_t>((range_hi_ps - range_lo_ps + bin_ps - 1) / bin_ps);
    DelayHistogram hist;
    hist.start_ps = range_lo_ps;
    hist.bin_ps = bin_ps;
    hist.counts.assign(n_bins, 0);
    for (const TimeTag& ta : a) {
        for (const TimeTag& tb : b) {
            const std::int64_t d = tb.t_ps - ta.t_ps;
            if (d < range_lo_ps || d >= range_hi_ps)
                continue;
            const std::size_t bin = static_cast<std::size_t>((d - range_lo_ps) / bin_ps);
            if (bin < n_bins)
                ++hist.counts[bin];
        }
    }
    return hist;
}

} // namespace ref

} // namespace pairlink
