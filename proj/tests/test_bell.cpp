#include "pairlink/bell.hpp"

#include "pairlink/rng.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace pairlink;

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;

// Poisson sampler for the bootstrap oracle
std::uint64_t poisson_draw(double mean, Rng& rng) {
    if (mean <= 0.0)
        return 0;
    if (mean < 60.0) {
        const double limit = std::exp(-mean);
        double prod = rng.uniform_pos();
        std::uint64_t k = 0;
        while (prod > limit) {
            prod *= rng.uniform_pos();
            ++k;
        }
        return k;
    }
    const double v = mean + std::sqrt(mean) * rng.normal();
    return v > 0.0 ? static_cast<std::uint64_t>(std::llround(v)) : 0;
}
} // namespace

TEST_CASE("expectation of perfectly correlated counts") {
    SettingCounts c;
    c.cc_pp = 100;
    c.cc_mm = 100;
    const Expectation e = expectation(c);
    CHECK(e.value == doctest::Approx(1.0));
    CHECK(e.sigma == doctest::Approx(0.0));
}

TEST_CASE("zero total count is an error") {
    SettingCounts c;
    CHECK_THROWS_AS(expectation(c), std::invalid_argument);
}

TEST_CASE("expectation is scale invariant, sigma scales as 1/sqrt(scale)") {
    SettingCounts c;
    c.cc_pp = 300;
    c.cc_mm = 310;
    c.cc_pm = 80;
    c.cc_mp = 75;
    const Expectation base = expectation(c);
    SettingCounts big = c;
    big.cc_pp *= 4;
    big.cc_mm *= 4;
    big.cc_pm *= 4;
    big.cc_mp *= 4;
    const Expectation scaled = expectation(big);
    CHECK(scaled.value == doctest::Approx(base.value).epsilon(1e-12));
    CHECK(scaled.sigma == doctest::Approx(base.sigma / 2.0).epsilon(1e-12));
}

TEST_CASE("sigma formula agrees with a Poisson bootstrap oracle") {
    SettingCounts c;
    c.cc_pp = 300;
    c.cc_mm = 310;
    c.cc_pm = 80;
    c.cc_mp = 75;
    const Expectation closed = expectation(c);

    Rng rng(20'240'202);
    const int n = 10'000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        SettingCounts r;
        r.cc_pp = poisson_draw(static_cast<double>(c.cc_pp), rng);
        r.cc_mm = poisson_draw(static_cast<double>(c.cc_mm), rng);
        r.cc_pm = poisson_draw(static_cast<double>(c.cc_pm), rng);
        r.cc_mp = poisson_draw(static_cast<double>(c.cc_mp), rng);
        const double e = expectation(r).value;
        sum += e;
        sum2 += e * e;
    }
    const double var = sum2 / n - (sum / n) * (sum / n);
    const double sigma_mc = std::sqrt(var);
    CHECK(closed.sigma == doctest::Approx(sigma_mc).epsilon(0.05));
}

TEST_CASE("CHSH replay of the four reference expectation values") {
    const Expectation e1{0.6482, 0.0131};
    const Expectation e2{-0.6917, 0.0123};
    const Expectation e3{0.7065, 0.0122};
    const Expectation e4{0.6461, 0.0133};
    const ChshResult r = chsh_s(e1, e2, e3, e4);
    CHECK(r.s == doctest::Approx(2.6925).epsilon(2e-4));
    CHECK(r.sigma_s > 0.024);
    CHECK(r.sigma_s < 0.026);
    CHECK(r.violation_sigmas == doctest::Approx(27.2).epsilon(0.02));
}

TEST_CASE("ideal expectation set reaches the Tsirelson value") {
    const double c = std::cos(std::numbers::pi / 4);
    const ChshResult r = chsh_s({c, 0}, {-c, 0}, {c, 0}, {c, 0});
    CHECK(r.s == doctest::Approx(2.0 * std::numbers::sqrt2).epsilon(1e-12));

    const ChshResult zero = chsh_s({0, 0}, {0, 0}, {0, 0}, {0, 0});
    CHECK(zero.s == 0.0);
}

TEST_CASE("model S equals 2 sqrt(2) V at the canonical angles") {
    for (double v : {1.0, 0.952, 0.70}) {
        SourceConfig cfg = test::test_source();
        cfg.visibility = v;
        auto e = [&](double ta_deg, double tb_deg) {
            return outcome_probabilities(ta_deg * kDeg, tb_deg * kDeg, cfg).e_model;
        };
        const double s = std::abs(e(0, 22.5) - e(0, 67.5) + e(45, 22.5) + e(45, 67.5));
        CHECK(s == doctest::Approx(2.0 * std::numbers::sqrt2 * v).epsilon(1e-12));
    }
    // V = 0.70 sits below the classical bound: 2 sqrt(2) * 0.7 = 1.98
    CHECK(2.0 * std::numbers::sqrt2 * 0.70 < 2.0);
}

TEST_CASE("correlation curve fit on noiseless samples") {
    for (double theta_a_deg : {0.0, 45.0}) {
        SourceConfig cfg = test::test_source();
        cfg.visibility = 1.0;
        std::vector<CorrelationSample> samples;
        for (int k = 0; k <= 8; ++k) {
            const double tb = k * 22.5 * kDeg;
            CorrelationSample s;
            s.theta_b_rad = tb;
            s.e.value = outcome_probabilities(theta_a_deg * kDeg, tb, cfg).e_model;
            s.e.sigma = 0.0;
            samples.push_back(s);
        }
        const CorrelationFit fit = fit_correlation_curve(samples);
        CHECK(fit.visibility == doctest::Approx(1.0).epsilon(1e-6));
        // phase is defined mod 90 degrees; compare the correlation curves
        const double want = theta_a_deg * kDeg;
        const double got = fit.phase_offset_rad;
        CHECK(std::abs(std::cos(2 * (got - want))) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("correlation curve fit recovers V from Poisson-noisy sweeps") {
    const double v_true = 0.946;
    SourceConfig cfg = test::test_source();
    cfg.visibility = v_true;
    Rng rng(313);
    std::vector<CorrelationSample> samples;
    const double per_point = 3000.0 * 10.0; // 3 kHz for 10 s
    for (int k = 0; k < 9; ++k) {
        const double tb = k * 20.0 * kDeg;
        const auto probs = outcome_probabilities(0.0, tb, cfg);
        SettingCounts counts;
        counts.cc_pp = poisson_draw(per_point * probs.p[0], rng);
        counts.cc_pm = poisson_draw(per_point * probs.p[1], rng);
        counts.cc_mp = poisson_draw(per_point * probs.p[2], rng);
        counts.cc_mm = poisson_draw(per_point * probs.p[3], rng);
        CorrelationSample s;
        s.theta_b_rad = tb;
        s.e = expectation(counts);
        samples.push_back(s);
    }
    const CorrelationFit fit = fit_correlation_curve(samples);
    // 3 sigma of the fitted V at this integration is well under 0.02
    CHECK(fit.visibility == doctest::Approx(v_true).epsilon(0.02));
}

TEST_CASE("degenerate sweeps are rejected") {
    std::vector<CorrelationSample> same(6);
    for (auto& s : same) {
        s.theta_b_rad = 0.4;
        s.e = {0.5, 0.01};
    }
    CHECK_THROWS_AS(fit_correlation_curve(same), std::invalid_argument);

    std::vector<CorrelationSample> few(3);
    few[0].theta_b_rad = 0.0;
    few[1].theta_b_rad = 0.5;
    few[2].theta_b_rad = 1.0;
    CHECK_THROWS_AS(fit_correlation_curve(few), std::invalid_argument);
}

TEST_CASE("end-to-end CHSH run on a small ideal config") {
    RunConfig cfg;
    cfg.source = test::test_source(1.0);
    cfg.source.pairs[0].a = 2e4;
    cfg.source.visibility = 1.0;
    cfg.active_pair = cfg.source.pairs[0].index;
    cfg.alice = test::ideal_node();
    cfg.bob = test::ideal_node();
    cfg.alice.clock.rng_seed = 11;
    cfg.bob.clock.rng_seed = 12;
    cfg.analysis.setting_duration_s = 2.0;
    cfg.analysis.search_half_range_ps = 10'000'000;
    cfg.seed = 4242;

    const ChshRunResult r = run_chsh_experiment(cfg);
    REQUIRE(r.settings.size() == 4);
    CHECK(r.chsh.s == doctest::Approx(2.0 * std::numbers::sqrt2).epsilon(0.02));
    CHECK(r.chsh.s < 2.0 * std::numbers::sqrt2 + 3.0 * r.chsh.sigma_s);
    CHECK(r.chsh.violation_sigmas > 15.0);
    for (const SettingRun& sr : r.settings)
        CHECK(std::abs(sr.e.value) <= 1.0);
}
