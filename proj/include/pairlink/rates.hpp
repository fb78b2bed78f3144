#pragma once

#include "pairlink/source.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pairlink {

enum class SweepSeries { singles_s, singles_i, coincidences };

const char* sweep_series_name(SweepSeries s);
SweepSeries sweep_series_from_name(const std::string& name);

struct SweepPoint {
    double power_mw = 0.0;
    double rate_hz = 0.0;
    SweepSeries which = SweepSeries::coincidences;
};

struct PowerSweep {
    std::vector<SweepPoint> points;

    std::vector<SweepPoint> series(SweepSeries which) const;
    bool has(SweepSeries which) const;
};

struct RateFit {
    double a = 0.0, b = 0.0, c = 0.0; // rate = a P^2 + b P + c
    double sigma_a = 0.0, sigma_b = 0.0, sigma_c = 0.0;
    double residual_norm = 0.0;
    bool negative_coefficient = false; // unconstrained fit dipped below zero

    double eval(double power_mw) const {
        return a * power_mw * power_mw + b * power_mw + c;
    }
};

struct RateFitOptions {
    bool poisson_weighted = false;     // weights 1/max(rate,1)
    bool constrain_nonnegative = false;
};

// Linear least squares in the (P^2, P, 1) basis via the normal equations;
// exact on noiseless polynomial data. Throws std::invalid_argument with a
// rank-deficient design (< 3 distinct powers).
RateFit fit_rate_curve(std::span<const SweepPoint> points, const RateFitOptions& opts = {});

struct CarPrediction {
    double value = 0.0;
    bool infinite = false; // zero predicted accidentals
};

// CAR(P) = CC(P) / (S_s(P) * S_i(P) * window); the window converts the
// singles product into an accidental rate.
CarPrediction predict_car(double power_mw, const RateFit& fit_s, const RateFit& fit_i,
                          const RateFit& fit_cc, std::int64_t window_ps);

// a / (bandwidth_nm * 10^(-loss_db/10)): loss-corrected source-side
// brightness per nm. 100 GHz at 1550 nm is 0.8 nm.
double brightness(const RateFit& fit, double bandwidth_nm, double total_loss_db);

constexpr double kNmPer100GhzAt1550 = 0.8;

struct PairScanEntry {
    int index = 0;
    double detuning_ghz = 0.0;
    RateFit singles_s;
    RateFit singles_i;
    RateFit coincidences;
    double cc_hz = 0.0;
    double car = 0.0;
};

struct SpectrumTable {
    struct Row {
        int index;
        double detuning_ghz, a, b_s, b_i, cc_hz, car;
    };
    std::vector<Row> rows; // sorted by detuning
    bool b_decreasing = false;
    bool car_nondecreasing = false;
};

// Per-pair summary across the DWDM grid; flags whether the CAR trend follows
// the Raman-noise falloff (CAR must not decrease while b decreases).
SpectrumTable spectrum_scan(std::span<const PairScanEntry> entries);

PowerSweep read_sweep_csv(const std::filesystem::path& path);
void write_sweep_csv(const PowerSweep& sweep, const std::filesystem::path& path);
void write_spectrum_csv(const SpectrumTable& table, const std::filesystem::path& path);

} // namespace pairlink
