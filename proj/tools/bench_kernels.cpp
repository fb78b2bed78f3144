// Benchmark of the OpenMP scan kernels against the serial reference
// implementations on synthetic Poisson streams. The reference paths are the
// same ones the test suite uses as oracles.

#include "pairlink/coincidence.hpp"
#include "pairlink/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

namespace {

using pairlink::DelayHistogram;
using pairlink::Rng;
using pairlink::TimeTag;

std::vector<TimeTag> poisson_stream(double rate_hz, double duration_s, std::uint64_t seed) {
    std::vector<TimeTag> tags;
    tags.reserve(static_cast<std::size_t>(rate_hz * duration_s * 1.1) + 16);
    Rng rng(seed);
    double t = 0.0;
    while (true) {
        t += rng.exponential(rate_hz);
        if (t >= duration_s)
            break;
        tags.push_back({static_cast<std::int64_t>(t * 1e12), 0});
    }
    return tags;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

int main(int argc, char** argv) {
    double rate_hz = 50'000.0;
    double duration_s = 1.0;
    std::size_t brute_tags = 10'000;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        const double v = std::atof(argv[i + 1]);
        if (flag == "--rate")
            rate_hz = v;
        else if (flag == "--duration")
            duration_s = v;
        else if (flag == "--brute-tags")
            brute_tags = static_cast<std::size_t>(v);
    }

    std::printf("pairlink kernel benchmark: rate %.0f Hz, duration %.1f s, %d worker(s)\n",
                rate_hz, duration_s, pairlink::worker_count());

    std::vector<TimeTag> a = poisson_stream(rate_hz, duration_s, 1);
    std::vector<TimeTag> b = poisson_stream(rate_hz, duration_s, 2);
    std::printf("streams: %zu / %zu tags\n\n", a.size(), b.size());

    // delay scan over +-1 ms at 1 ns bins: the initial-offset workload
    {
        const std::int64_t half = 1'000'000'000;
        const auto t0 = std::chrono::steady_clock::now();
        const DelayHistogram h = pairlink::delay_scan(a, b, -half, half, 1000);
        const double t_omp = seconds_since(t0);

        std::vector<TimeTag> a_small(a.begin(),
                                     a.begin() + std::min<std::size_t>(a.size(), 20'000));
        std::vector<TimeTag> b_small(b.begin(),
                                     b.begin() + std::min<std::size_t>(b.size(), 20'000));
        const auto t1 = std::chrono::steady_clock::now();
        const DelayHistogram hn =
            pairlink::ref::delay_scan_naive(a_small, b_small, -half, half, 1000);
        const double t_naive = seconds_since(t1);
        const double per_pair_naive =
            t_naive / (static_cast<double>(a_small.size()) * static_cast<double>(b_small.size()));
        const double naive_full =
            per_pair_naive * static_cast<double>(a.size()) * static_cast<double>(b.size());

        std::printf("delay_scan +-1 ms @ 1 ns   kernel  %8.3f s   (total %llu)\n", t_omp,
                    static_cast<unsigned long long>(h.total()));
        std::printf("delay_scan naive reference %8.3f s on %zux%zu -> %.1f s extrapolated "
                    "(x%.0f)\n\n",
                    t_naive, a_small.size(), b_small.size(), naive_full, naive_full / t_omp);
        (void)hn;
    }

    // greedy coincidence counter vs the O(n^2) oracle, on correlated streams
    // so the matcher actually matches
    {
        std::vector<TimeTag> a_small(a.begin(),
                                     a.begin() + std::min<std::size_t>(a.size(), brute_tags));
        std::vector<TimeTag> b_small = a_small;
        Rng jitter(3);
        for (TimeTag& t : b_small)
            t.t_ps += static_cast<std::int64_t>(jitter.normal() * 140.0);
        std::sort(b_small.begin(), b_small.end());
        const auto t0 = std::chrono::steady_clock::now();
        std::uint64_t fast = 0;
        for (int rep = 0; rep < 100; ++rep)
            fast = pairlink::count_coincidences(a_small, b_small, 0, 1000);
        const double t_fast = seconds_since(t0) / 100.0;

        const auto t1 = std::chrono::steady_clock::now();
        const std::uint64_t brute =
            pairlink::ref::count_coincidences_bruteforce(a_small, b_small, 0, 1000);
        const double t_brute = seconds_since(t1);

        std::printf("count_coincidences %zu tags  kernel %9.6f s, brute force %9.6f s (x%.0f), "
                    "counts %llu/%llu %s\n",
                    a_small.size(), t_fast, t_brute, t_brute / t_fast,
                    static_cast<unsigned long long>(fast),
                    static_cast<unsigned long long>(brute),
                    fast == brute ? "MATCH" : "MISMATCH");
        if (fast != brute)
            return 1;
    }
    return 0;
}
