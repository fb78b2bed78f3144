#pragma once

#include "pairlink/config.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pairlink {

struct SettingCounts {
    double theta_a_rad = 0.0;
    double theta_b_rad = 0.0;
    std::uint64_t cc_pp = 0;
    std::uint64_t cc_mm = 0;
    std::uint64_t cc_pm = 0;
    std::uint64_t cc_mp = 0;

    std::uint64_t total() const { return cc_pp + cc_mm + cc_pm + cc_mp; }
};

struct Expectation {
    double value = 0.0;
    double sigma = 0.0;
};

struct ChshResult {
    double s = 0.0;
    double sigma_s = 0.0;
    double violation_sigmas = 0.0; // (s - 2) / sigma_s
};

// E = (CC++ + CC-- - CC+- - CC-+) / T with Poissonian error
// sigma = 2 sqrt(A B / T^3), A = CC++ + CC--, B = CC+- + CC-+.
// Throws std::invalid_argument when T = 0.
Expectation expectation(const SettingCounts& counts);

// S = |E1 - E2 + E3 + E4|, sigma_S in quadrature.
ChshResult chsh_s(const Expectation& e1, const Expectation& e2, const Expectation& e3,
                  const Expectation& e4);

struct CorrelationSample {
    double theta_b_rad = 0.0;
    Expectation e;
};

struct CorrelationFit {
    double visibility = 0.0;
    double phase_offset_rad = 0.0; // E(theta_b) = V cos(2(theta_b - phase))
};

// Weighted linear least squares in the (cos 2theta, sin 2theta) basis; needs
// >= 5 distinct angles. Samples with sigma <= 0 switch the fit to unweighted.
CorrelationFit fit_correlation_curve(std::span<const CorrelationSample> samples);

struct SettingRun {
    SettingPair setting;         // degrees, as configured
    SettingCounts counts;
    Expectation e;
    double delay_ps = 0.0;       // fitted residual delay after sync correction
    double accidentals = 0.0;    // summed over the four channel combinations
    double car = 0.0;
};

struct ChshRunResult {
    ChshResult chsh;
    std::vector<SettingRun> settings;
};

// End-to-end orchestration: per analyzer combination, simulate both nodes,
// run the sync pipeline, count the four channel combinations at the corrected
// delay, then combine the four expectations into S.
ChshRunResult run_chsh_experiment(const RunConfig& cfg);

void write_chsh_json(const ChshRunResult& r, const std::string& config_hash,
                     const std::filesystem::path& path);
void write_correlation_csv(std::span<const CorrelationSample> samples,
                           const std::filesystem::path& path);
void write_correlation_fit_json(const CorrelationFit& fit, const std::string& config_hash,
                                const std::filesystem::path& path);

} // namespace pairlink
