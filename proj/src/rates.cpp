#include "pairlink/rates.hpp"

#include "pairlink/linalg.hpp"
#include "pairlink/util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pairlink {

const char* sweep_series_name(SweepSeries s) {
    switch (s) {
    case SweepSeries::singles_s:
        return "singles_s";
    case SweepSeries::singles_i:
        return "singles_i";
    case SweepSeries::coincidences:
        return "coincidences";
    }
    return "?";
}

SweepSeries sweep_series_from_name(const std::string& name) {
    if (name == "singles_s")
        return SweepSeries::singles_s;
    if (name == "singles_i")
        return SweepSeries::singles_i;
    if (name == "coincidences")
        return SweepSeries::coincidences;
    throw std::invalid_argument("unknown sweep series '" + name +
                                "' (singles_s|singles_i|coincidences)");
}

std::vector<SweepPoint> PowerSweep::series(SweepSeries which) const {
    std::vector<SweepPoint> out;
    for (const SweepPoint& p : points)
        if (p.which == which)
            out.push_back(p);
    return out;
}

bool PowerSweep::has(SweepSeries which) const {
    return std::any_of(points.begin(), points.end(),
                       [&](const SweepPoint& p) { return p.which == which; });
}

namespace {

// Weighted normal equations for the 3-parameter basis (P^2, P, 1); long
// double accumulation keeps the noiseless case exact to ~1e-12 relative.
RateFit solve_fit(std::span<const SweepPoint> points, bool poisson_weighted,
                  const std::array<bool, 3>& active) {
    const int n_active = static_cast<int>(active[0]) + static_cast<int>(active[1]) +
                         static_cast<int>(active[2]);
    std::vector<long double> ata(static_cast<std::size_t>(n_active) * n_active, 0.0L);
    std::vector<long double> aty(n_active, 0.0L);

    auto basis = [](double p, int k) {
        return k == 0 ? p * p : (k == 1 ? p : 1.0);
    };
    std::array<int, 3> col{};
    {
        int c = 0;
        for (int k = 0; k < 3; ++k)
            col[k] = active[k] ? c++ : -1;
    }

    for (const SweepPoint& pt : points) {
        const double w = poisson_weighted ? 1.0 / std::max(pt.rate_hz, 1.0) : 1.0;
        for (int k = 0; k < 3; ++k) {
            if (!active[k])
                continue;
            const double xk = basis(pt.power_mw, k);
            aty[col[k]] += static_cast<long double>(w) * xk * pt.rate_hz;
            for (int l = k; l < 3; ++l) {
                if (!active[l])
                    continue;
                ata[col[k] * n_active + col[l]] +=
                    static_cast<long double>(w) * xk * basis(pt.power_mw, l);
            }
        }
    }
    for (int k = 0; k < n_active; ++k)
        for (int l = 0; l < k; ++l)
            ata[k * n_active + l] = ata[l * n_active + k];

    std::vector<double> m(ata.begin(), ata.end());
    std::vector<double> rhs(aty.begin(), aty.end());
    const std::vector<double> m_copy = m;
    if (!solve_dense(m, rhs, n_active))
        throw std::invalid_argument("fit_rate_curve: rank-deficient design (repeated powers)");

    RateFit fit;
    double* coef[3] = {&fit.a, &fit.b, &fit.c};
    for (int k = 0; k < 3; ++k)
        *coef[k] = active[k] ? rhs[col[k]] : 0.0;

    // residuals and covariance
    long double ssr = 0.0L;
    for (const SweepPoint& pt : points) {
        const double w = poisson_weighted ? 1.0 / std::max(pt.rate_hz, 1.0) : 1.0;
        const double r = fit.eval(pt.power_mw) - pt.rate_hz;
        ssr += static_cast<long double>(w) * r * r;
    }
    fit.residual_norm = std::sqrt(static_cast<double>(ssr));

    const int dof = static_cast<int>(points.size()) - n_active;
    const double s2 = dof > 0 ? static_cast<double>(ssr) / dof : 0.0;
    std::vector<double> inv;
    if (invert_dense(m_copy, inv, n_active)) {
        double* sig[3] = {&fit.sigma_a, &fit.sigma_b, &fit.sigma_c};
        for (int k = 0; k < 3; ++k)
            if (active[k])
                *sig[k] = std::sqrt(std::max(0.0, s2 * inv[col[k] * n_active + col[k]]));
    }
    return fit;
}

} // namespace

RateFit fit_rate_curve(std::span<const SweepPoint> points, const RateFitOptions& opts) {
    std::set<double> powers;
    for (const SweepPoint& p : points)
        powers.insert(p.power_mw);
    if (powers.size() < 3)
        throw std::invalid_argument("fit_rate_curve: need >= 3 distinct powers");

    std::array<bool, 3> active{true, true, true};
    RateFit fit = solve_fit(points, opts.poisson_weighted, active);
    fit.negative_coefficient = fit.a < 0.0 || fit.b < 0.0 || fit.c < 0.0;

    if (opts.constrain_nonnegative) {
        // active-set clipping: drop negative coefficients, refit the rest
        for (int pass = 0; pass < 3 && fit.negative_coefficient; ++pass) {
            if (fit.a < 0.0)
                active[0] = false;
            if (fit.b < 0.0)
                active[1] = false;
            if (fit.c < 0.0)
                active[2] = false;
            if (!active[0] && !active[1] && !active[2]) {
                fit = RateFit{};
                break;
            }
            fit = solve_fit(points, opts.poisson_weighted, active);
            fit.negative_coefficient = fit.a < 0.0 || fit.b < 0.0 || fit.c < 0.0;
        }
        fit.negative_coefficient = false;
    }
    return fit;
}

CarPrediction predict_car(double power_mw, const RateFit& fit_s, const RateFit& fit_i,
                          const RateFit& fit_cc, std::int64_t window_ps) {
    const double cc = fit_cc.eval(power_mw);
    const double window_s = static_cast<double>(window_ps) * 1e-12;
    const double accidentals = fit_s.eval(power_mw) * fit_i.eval(power_mw) * window_s;
    if (accidentals <= 0.0)
        return {std::numeric_limits<double>::infinity(), true};
    return {cc / accidentals, false};
}

double brightness(const RateFit& fit, double bandwidth_nm, double total_loss_db) {
    if (bandwidth_nm <= 0.0)
        throw std::invalid_argument("brightness: bandwidth must be positive");
    return fit.a / (bandwidth_nm * std::pow(10.0, -total_loss_db / 10.0));
}

SpectrumTable spectrum_scan(std::span<const PairScanEntry> entries) {
    SpectrumTable table;
    for (const PairScanEntry& e : entries)
        table.rows.push_back({e.index, e.detuning_ghz, e.coincidences.a,
                              e.singles_s.b, e.singles_i.b, e.cc_hz, e.car});
    std::sort(table.rows.begin(), table.rows.end(),
              [](const SpectrumTable::Row& x, const SpectrumTable::Row& y) {
                  return x.detuning_ghz < y.detuning_ghz;
              });

    table.b_decreasing = table.rows.size() >= 2;
    table.car_nondecreasing = table.rows.size() >= 2;
    for (std::size_t i = 0; i + 1 < table.rows.size(); ++i) {
        const double b0 = table.rows[i].b_s + table.rows[i].b_i;
        const double b1 = table.rows[i + 1].b_s + table.rows[i + 1].b_i;
        if (b1 >= b0)
            table.b_decreasing = false;
        if (table.rows[i + 1].car < table.rows[i].car)
            table.car_nondecreasing = false;
    }
    return table;
}

PowerSweep read_sweep_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    PowerSweep sweep;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.starts_with("power_mw"))
            continue;
        std::stringstream ss(line);
        std::string power, rate, which;
        if (!std::getline(ss, power, ',') || !std::getline(ss, rate, ',') ||
            !std::getline(ss, which))
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": expected power_mw,count_rate_hz,which");
        SweepPoint p;
        try {
            p.power_mw = std::stod(power);
            p.rate_hz = std::stod(rate);
        } catch (...) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": bad number");
        }
        while (!which.empty() && (which.back() == '\r' || which.back() == ' '))
            which.pop_back();
        while (!which.empty() && which.front() == ' ')
            which.erase(which.begin());
        p.which = sweep_series_from_name(which);
        sweep.points.push_back(p);
    }
    return sweep;
}

void write_sweep_csv(const PowerSweep& sweep, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "power_mw,count_rate_hz,which\n";
    for (const SweepPoint& p : sweep.points)
        out << format_double(p.power_mw) << ',' << format_double(p.rate_hz) << ','
            << sweep_series_name(p.which) << '\n';
}

void write_spectrum_csv(const SpectrumTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "index,detuning_ghz,a,b_s,b_i,cc_hz,car\n";
    for (const SpectrumTable::Row& r : table.rows)
        out << r.index << ',' << format_double(r.detuning_ghz) << ',' << format_double(r.a)
            << ',' << format_double(r.b_s) << ',' << format_double(r.b_i) << ','
            << format_double(r.cc_hz) << ',' << format_double(r.car) << '\n';
}

} // namespace pairlink
