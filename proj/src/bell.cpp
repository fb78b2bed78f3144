#include "pairlink/bell.hpp"

#include "pairlink/linalg.hpp"
#include "pairlink/sync.hpp"
#include "pairlink/util.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

namespace pairlink {

Expectation expectation(const SettingCounts& counts) {
    const double t = static_cast<double>(counts.total());
    if (t <= 0.0)
        throw std::invalid_argument("expectation: zero total count");
    const double same = static_cast<double>(counts.cc_pp + counts.cc_mm);
    const double diff = static_cast<double>(counts.cc_pm + counts.cc_mp);
    Expectation e;
    e.value = (same - diff) / t;
    e.sigma = 2.0 * std::sqrt(same * diff / (t * t * t));
    return e;
}

ChshResult chsh_s(const Expectation& e1, const Expectation& e2, const Expectation& e3,
                  const Expectation& e4) {
    ChshResult r;
    r.s = std::abs(e1.value - e2.value + e3.value + e4.value);
    r.sigma_s = std::sqrt(e1.sigma * e1.sigma + e2.sigma * e2.sigma + e3.sigma * e3.sigma +
                          e4.sigma * e4.sigma);
    r.violation_sigmas = r.sigma_s > 0.0 ? (r.s - 2.0) / r.sigma_s : 0.0;
    return r;
}

CorrelationFit fit_correlation_curve(std::span<const CorrelationSample> samples) {
    std::set<double> distinct;
    for (const CorrelationSample& s : samples)
        distinct.insert(s.theta_b_rad);
    if (distinct.size() < 5)
        throw std::invalid_argument("fit_correlation_curve: need >= 5 distinct angles");

    bool weighted = true;
    for (const CorrelationSample& s : samples)
        if (!(s.e.sigma > 0.0))
            weighted = false;

    // E = alpha cos 2t + beta sin 2t; V = |(alpha, beta)|, phase = atan2/2.
    std::vector<double> m(4, 0.0), rhs(2, 0.0);
    for (const CorrelationSample& s : samples) {
        const double w = weighted ? 1.0 / (s.e.sigma * s.e.sigma) : 1.0;
        const double c = std::cos(2.0 * s.theta_b_rad);
        const double n = std::sin(2.0 * s.theta_b_rad);
        m[0] += w * c * c;
        m[1] += w * c * n;
        m[3] += w * n * n;
        rhs[0] += w * c * s.e.value;
        rhs[1] += w * n * s.e.value;
    }
    m[2] = m[1];
    if (!solve_dense(m, rhs, 2))
        throw std::invalid_argument("fit_correlation_curve: degenerate sweep");
    CorrelationFit fit;
    fit.visibility = std::hypot(rhs[0], rhs[1]);
    fit.phase_offset_rad = 0.5 * std::atan2(rhs[1], rhs[0]);
    return fit;
}

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

SettingCounts count_setting(const TagStream& alice, const TagStream& bob,
                            std::int64_t delay_ps, std::int64_t window_ps,
                            const SettingPair& setting) {
    SettingCounts counts;
    counts.theta_a_rad = setting.theta_a_deg * kDegToRad;
    counts.theta_b_rad = setting.theta_b_deg * kDegToRad;

    const TagStream a_p = filter_channel(alice, 0);
    const TagStream a_m = filter_channel(alice, 1);
    const TagStream b_p = filter_channel(bob, 0);
    const TagStream b_m = filter_channel(bob, 1);
    counts.cc_pp = count_coincidences(a_p.tags, b_p.tags, delay_ps, window_ps);
    counts.cc_pm = count_coincidences(a_p.tags, b_m.tags, delay_ps, window_ps);
    counts.cc_mp = count_coincidences(a_m.tags, b_p.tags, delay_ps, window_ps);
    counts.cc_mm = count_coincidences(a_m.tags, b_m.tags, delay_ps, window_ps);
    return counts;
}

} // namespace

ChshRunResult run_chsh_experiment(const RunConfig& cfg) {
    if (cfg.analysis.settings.size() != 4)
        throw ConfigError("run_chsh_experiment: exactly four analyzer settings required");
    const ChannelPair& pair = cfg.active_channel_pair();

    ChshRunResult result;
    std::vector<Expectation> expectations;
    for (std::size_t s = 0; s < 4; ++s) {
        const SettingPair& setting = cfg.analysis.settings[s];

        // each combination is an independent acquisition with its own seeds
        SourceConfig source = cfg.source;
        source.rng_seed = derive_seed(cfg.seed, 0x50, s);
        NodeConfig alice = cfg.alice;
        alice.clock.rng_seed = derive_seed(cfg.alice.clock.rng_seed, s);
        NodeConfig bob = cfg.bob;
        bob.clock.rng_seed = derive_seed(cfg.bob.clock.rng_seed, s);

        AnalyzerSettings analyzers{setting.theta_a_deg * kDegToRad,
                                   setting.theta_b_deg * kDegToRad};
        const TwoNodeRun run =
            simulate_two_node(source, pair, alice, bob, cfg.analysis.setting_duration_s,
                              derive_seed(cfg.seed, 0x5e77, s), analyzers);

        SyncOptions opts;
        opts.search_half_range_ps = cfg.analysis.search_half_range_ps;
        opts.coarse_bin_ps = cfg.analysis.coarse_bin_ps;
        opts.fine_half_range_ps = cfg.analysis.fine_half_range_ps;
        const SyncPipelineResult sync = run_sync_pipeline(run.alice, run.bob, opts);

        // residual delay of the corrected stream (close to 0 by construction)
        const double residual =
            sync.after.delta_T_ps.empty() ? 0.0 : sync.after.delta_T_ps.front();
        const std::int64_t delay = std::llround(residual);

        SettingRun sr;
        sr.setting = setting;
        sr.delay_ps = residual;
        sr.counts = count_setting(run.alice, sync.corrected, delay, cfg.analysis.window_ps,
                                  setting);
        sr.e = expectation(sr.counts);
        sr.accidentals = estimate_accidentals(run.alice.tags, sync.corrected.tags, delay,
                                              cfg.analysis.window_ps,
                                              cfg.analysis.accidental_offsets);
        const double total = static_cast<double>(sr.counts.total());
        sr.car = sr.accidentals > 0.0 ? total / sr.accidentals : 0.0;
        expectations.push_back(sr.e);
        result.settings.push_back(std::move(sr));
    }
    result.chsh = chsh_s(expectations[0], expectations[1], expectations[2], expectations[3]);
    return result;
}

void write_chsh_json(const ChshRunResult& r, const std::string& config_hash,
                     const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash;
    j["s"] = r.chsh.s;
    j["sigma_s"] = r.chsh.sigma_s;
    j["violation_sigmas"] = r.chsh.violation_sigmas;
    j["settings"] = nlohmann::ordered_json::array();
    for (const SettingRun& sr : r.settings) {
        nlohmann::ordered_json js;
        js["theta_a_deg"] = sr.setting.theta_a_deg;
        js["theta_b_deg"] = sr.setting.theta_b_deg;
        js["cc_pp"] = sr.counts.cc_pp;
        js["cc_pm"] = sr.counts.cc_pm;
        js["cc_mp"] = sr.counts.cc_mp;
        js["cc_mm"] = sr.counts.cc_mm;
        js["expectation"] = sr.e.value;
        js["sigma"] = sr.e.sigma;
        js["residual_delay_ps"] = sr.delay_ps;
        js["accidentals"] = sr.accidentals;
        js["car"] = sr.car;
        j["settings"].push_back(std::move(js));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out)
        throw std::runtime_error("write failure on " + path.string());
}

void write_correlation_fit_json(const CorrelationFit& fit, const std::string& config_hash,
                                const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash;
    j["visibility"] = fit.visibility;
    j["phase_offset_rad"] = fit.phase_offset_rad;
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

void write_correlation_csv(std::span<const CorrelationSample> samples,
                           const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "theta_b_deg,E,sigma\n";
    for (const CorrelationSample& s : samples)
        out << format_double(s.theta_b_rad / kDegToRad) << ',' << format_double(s.e.value)
            << ',' << format_double(s.e.sigma) << '\n';
    if (!out)
        throw std::runtime_error("write failure on " + path.string());
}

} // namespace pairlink
