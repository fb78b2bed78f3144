#include "pairlink/cli.hpp"

#include "pairlink/bell.hpp"
#include "pairlink/config.hpp"
#include "pairlink/rates.hpp"
#include "pairlink/sync.hpp"
#include "pairlink/tag_file.hpp"
#include "pairlink/util.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace pairlink::cli {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSync = 3;
constexpr int kExitIo = 4;

struct CommonOpts {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;       // overrides run.seed when nonzero
    std::int64_t window_ps = 0;   // overrides analysis.window_ps when nonzero
    std::string format = "json";  // csv|json where both make sense
};

RunConfig load_run_config(const CommonOpts& opts, bool config_required) {
    RunConfig cfg;
    if (!opts.config_path.empty()) {
        cfg = load_config(opts.config_path);
    } else if (config_required) {
        throw ConfigError("--config is required for this command");
    } else {
        // file-driven commands: defaults + flags, hashed for the exports
        cfg.source.pairs.push_back({1, 100.0, 0.0, 0.0, 0.0, 0.0, 0.0});
        cfg.active_pair = 1;
        cfg.config_hash = to_hex(fnv1a64("defaults"));
    }
    if (opts.seed != 0)
        cfg.seed = opts.seed;
    if (opts.window_ps != 0)
        cfg.analysis.window_ps = opts.window_ps;
    return cfg;
}

fs::path ensure_out_dir(const std::string& dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

SyncOptions sync_options(const RunConfig& cfg) {
    SyncOptions o;
    o.search_half_range_ps = cfg.analysis.search_half_range_ps;
    o.coarse_bin_ps = cfg.analysis.coarse_bin_ps;
    o.fine_half_range_ps = cfg.analysis.fine_half_range_ps;
    return o;
}

void write_json_file(const ordered_json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out)
        throw std::runtime_error("write failure on " + path.string());
}

int cmd_simulate(const CommonOpts& opts) {
    RunConfig cfg = load_run_config(opts, true);
    finalize_seeds(cfg);
    const fs::path out = ensure_out_dir(opts.out_dir);

    const TwoNodeRun run =
        simulate_two_node(cfg.source, cfg.active_channel_pair(), cfg.alice, cfg.bob,
                          cfg.duration_s, derive_seed(cfg.seed, 0x5e77));
    write_tag_file(run.alice, out / "alice.ptag");
    write_tag_file(run.bob, out / "bob.ptag");

    ordered_json manifest;
    manifest["config_hash"] = cfg.config_hash;
    manifest["seed"] = cfg.seed;
    manifest["duration_s"] = cfg.duration_s;
    manifest["active_pair"] = cfg.active_pair;
    manifest["alice_link_delay_ps"] = run.truth.alice_delay_ps;
    manifest["bob_link_delay_ps"] = run.truth.bob_delay_ps;
    manifest["counts"] = {{"pair_events", run.truth.pair_events},
                          {"noise_s_events", run.truth.noise_s_events},
                          {"noise_i_events", run.truth.noise_i_events},
                          {"alice_tags", run.alice.tags.size()},
                          {"bob_tags", run.bob.tags.size()}};
    manifest["clock_true_alice_ps"] = run.truth.clock_alice_ps;
    manifest["clock_true_bob_ps"] = run.truth.clock_bob_ps;
    write_json_file(manifest, out / "manifest.json");

    std::cout << "simulate: " << run.alice.tags.size() << " alice tags, "
              << run.bob.tags.size() << " bob tags, bob link delay "
              << run.truth.bob_delay_ps << " ps\n";
    return kExitOk;
}

int cmd_sync(const CommonOpts& opts, const std::string& file_a, const std::string& file_b) {
    const RunConfig cfg = load_run_config(opts, false);
    const fs::path out = ensure_out_dir(opts.out_dir);

    const TagStream a = read_tag_file(file_a);
    const TagStream b = read_tag_file(file_b);
    const SyncPipelineResult r = run_sync_pipeline(a, b, sync_options(cfg));

    write_sync_csv(r.before, out / "sync_before.csv");
    write_sync_csv(r.after, out / "sync_after.csv");

    ordered_json allan;
    allan["config_hash"] = cfg.config_hash;
    allan["initial_offset_ps"] = r.initial_offset_ps;
    allan["blocks"] = r.before.blocks();
    allan["before"] = {{"allan_var_ns2", r.before.allan_var_ns2},
                       {"allan_sigma_ns", std::sqrt(r.before.allan_var_ns2)},
                       {"allan_var_all_ns2", r.before.allan_var_all_ns2},
                       {"flagged_blocks", r.before.flagged_count()}};
    allan["after"] = {{"allan_var_ns2", r.after.allan_var_ns2},
                      {"allan_sigma_ns", std::sqrt(r.after.allan_var_ns2)},
                      {"allan_var_all_ns2", r.after.allan_var_all_ns2},
                      {"flagged_blocks", r.after.flagged_count()}};
    write_json_file(allan, out / "allan.json");

    std::cout << "sync: initial offset " << format_double(r.initial_offset_ps)
              << " ps, allan sigma before " << format_double(std::sqrt(r.before.allan_var_ns2))
              << " ns, after " << format_double(std::sqrt(r.after.allan_var_ns2)) << " ns\n";
    return kExitOk;
}

int cmd_coincide(const CommonOpts& opts, const std::string& file_a, const std::string& file_b,
                 std::int64_t delay_ps, bool delay_given, const std::string& histogram_path) {
    const RunConfig cfg = load_run_config(opts, false);
    const fs::path out = ensure_out_dir(opts.out_dir);

    const TagStream a = read_tag_file(file_a);
    const TagStream b = read_tag_file(file_b);

    std::int64_t delay = delay_ps;
    if (!delay_given) {
        const SyncOptions so = sync_options(cfg);
        const double found = find_initial_offset(a.tags, b.tags, so.search_half_range_ps, so);
        delay = std::llround(found);
    }

    CoincidenceResult res;
    res.window_ps = cfg.analysis.window_ps;
    res.delay_ps = delay;
    res.cc = count_coincidences(a.tags, b.tags, delay, res.window_ps);
    res.accidentals = estimate_accidentals(a.tags, b.tags, delay, res.window_ps,
                                           cfg.analysis.accidental_offsets);
    res.car = res.accidentals > 0.0 ? static_cast<double>(res.cc) / res.accidentals : 0.0;

    if (!histogram_path.empty()) {
        const std::int64_t half = std::max<std::int64_t>(50'000, 50 * res.window_ps);
        const DelayHistogram h = delay_scan(a.tags, b.tags, delay - half, delay + half,
                                            std::max(a.resolution_ps, b.resolution_ps));
        write_histogram_csv(h, histogram_path);
    }

    if (opts.format == "csv") {
        std::ofstream f(out / "coincidence.csv", std::ios::trunc);
        f << "cc,accidentals,car,window_ps,delay_ps,config_hash\n"
          << res.cc << ',' << format_double(res.accidentals) << ',' << format_double(res.car)
          << ',' << res.window_ps << ',' << res.delay_ps << ',' << cfg.config_hash << '\n';
    } else {
        ordered_json j;
        j["config_hash"] = cfg.config_hash;
        j["cc"] = res.cc;
        j["accidentals"] = res.accidentals;
        j["car"] = res.car;
        j["window_ps"] = res.window_ps;
        j["delay_ps"] = res.delay_ps;
        write_json_file(j, out / "coincidence.json");
    }

    std::cout << "coincide: cc " << res.cc << ", accidentals " << format_double(res.accidentals)
              << ", car " << format_double(res.car) << ", delay " << res.delay_ps << " ps\n";
    return kExitOk;
}

int cmd_chsh(const CommonOpts& opts) {
    RunConfig cfg = load_run_config(opts, true);
    finalize_seeds(cfg);
    const fs::path out = ensure_out_dir(opts.out_dir);

    const ChshRunResult r = run_chsh_experiment(cfg);
    write_chsh_json(r, cfg.config_hash, out / "chsh.json");

    std::cout << "chsh: S = " << format_double(r.chsh.s) << " +- "
              << format_double(r.chsh.sigma_s) << " ("
              << format_double(r.chsh.violation_sigmas) << " sigma above 2)\n";
    return kExitOk;
}

int cmd_ratefit(const CommonOpts& opts, const std::string& sweep_path, bool poisson_weighted,
                bool nonnegative, double bandwidth_nm, double loss_db) {
    const RunConfig cfg = load_run_config(opts, false);
    const fs::path out = ensure_out_dir(opts.out_dir);

    const PowerSweep sweep = read_sweep_csv(sweep_path);
    if (sweep.points.empty())
        throw std::runtime_error(sweep_path + ": empty sweep");

    RateFitOptions fit_opts;
    fit_opts.poisson_weighted = poisson_weighted;
    fit_opts.constrain_nonnegative = nonnegative;

    ordered_json j;
    j["config_hash"] = cfg.config_hash;
    std::array<std::optional<RateFit>, 3> fits;
    for (SweepSeries series :
         {SweepSeries::singles_s, SweepSeries::singles_i, SweepSeries::coincidences}) {
        if (!sweep.has(series))
            continue;
        const std::vector<SweepPoint> pts = sweep.series(series);
        const RateFit fit = fit_rate_curve(pts, fit_opts);
        fits[static_cast<std::size_t>(series)] = fit;
        ordered_json jf;
        jf["a"] = fit.a;
        jf["b"] = fit.b;
        jf["c"] = fit.c;
        jf["sigma_a"] = fit.sigma_a;
        jf["sigma_b"] = fit.sigma_b;
        jf["sigma_c"] = fit.sigma_c;
        jf["residual_norm"] = fit.residual_norm;
        jf["negative_coefficient"] = fit.negative_coefficient;
        // signed residuals expose systematic departures from the quadratic
        // model (e.g. absorption losses flattening the top of a power sweep)
        ordered_json jr = ordered_json::array();
        for (const SweepPoint& p : pts)
            jr.push_back({{"power_mw", p.power_mw},
                          {"residual_hz", p.rate_hz - fit.eval(p.power_mw)}});
        jf["residuals"] = std::move(jr);
        if (bandwidth_nm > 0.0)
            jf["brightness_s_nm_mw2"] = brightness(fit, bandwidth_nm, loss_db);
        j[sweep_series_name(series)] = std::move(jf);
        std::cout << "ratefit " << sweep_series_name(series) << ": a = " << format_double(fit.a)
                  << ", b = " << format_double(fit.b) << ", c = " << format_double(fit.c)
                  << '\n';
    }
    const auto& fs_ = fits[static_cast<std::size_t>(SweepSeries::singles_s)];
    const auto& fi_ = fits[static_cast<std::size_t>(SweepSeries::singles_i)];
    const auto& fc_ = fits[static_cast<std::size_t>(SweepSeries::coincidences)];
    if (fs_ && fi_ && fc_) {
        ordered_json jcar = ordered_json::array();
        std::vector<double> powers;
        for (const SweepPoint& p : sweep.points)
            powers.push_back(p.power_mw);
        std::sort(powers.begin(), powers.end());
        powers.erase(std::unique(powers.begin(), powers.end()), powers.end());
        for (double p : powers) {
            const CarPrediction car = predict_car(p, *fs_, *fi_, *fc_, cfg.analysis.window_ps);
            jcar.push_back({{"power_mw", p},
                            {"car", car.infinite ? ordered_json("inf") : ordered_json(car.value)}});
        }
        j["car_prediction"] = std::move(jcar);
        j["car_window_ps"] = cfg.analysis.window_ps;
    }
    write_json_file(j, out / "ratefit.json");
    return kExitOk;
}

} // namespace

int run(std::vector<std::string> args) {
    CLI::App app{"pairlink: photon-pair time-tag simulation and analysis"};
    app.require_subcommand(0, 1);

    bool help_config = false;
    app.add_flag("--help-config", help_config, "print the canonical config schema and exit");

    CommonOpts opts;
    std::string file_a, file_b, sweep_path, histogram_path;
    std::int64_t delay_ps = 0;
    bool poisson_weighted = false, nonnegative = false;
    double bandwidth_nm = 0.0, loss_db = 0.0;

    auto add_common = [&](CLI::App* cmd, bool with_format = true) {
        cmd->add_option("--config", opts.config_path, "config file (key=value sections or JSON)");
        cmd->add_option("--seed", opts.seed, "override run.seed");
        cmd->add_option("--out", opts.out_dir, "output directory (default .)");
        cmd->add_option("--window-ps", opts.window_ps, "override analysis.window_ps");
        if (with_format)
            cmd->add_option("--format", opts.format, "csv|json export encoding")
                ->check(CLI::IsMember({"csv", "json"}));
    };

    CLI::App* simulate = app.add_subcommand("simulate", "write alice/bob PTAG streams + manifest");
    add_common(simulate, false);

    CLI::App* sync = app.add_subcommand("sync", "offset discovery, drift tracking, Allan report");
    sync->add_option("tagfile_a", file_a, "Alice PTAG file")->required();
    sync->add_option("tagfile_b", file_b, "Bob PTAG file")->required();
    add_common(sync, false);

    CLI::App* coincide = app.add_subcommand("coincide", "CC/CAR between two PTAG files");
    coincide->add_option("tagfile_a", file_a, "Alice PTAG file")->required();
    coincide->add_option("tagfile_b", file_b, "Bob PTAG file")->required();
    CLI::Option* delay_opt =
        coincide->add_option("--delay-ps", delay_ps, "fixed delay; omitted: find the peak");
    coincide->add_option("--histogram", histogram_path, "also write a delay histogram CSV here");
    add_common(coincide);

    CLI::App* chsh = app.add_subcommand("chsh", "end-to-end CHSH experiment from a config");
    add_common(chsh, false);

    CLI::App* ratefit = app.add_subcommand("ratefit", "fit aP^2+bP+c to a power sweep CSV");
    ratefit->add_option("sweep_csv", sweep_path, "CSV: power_mw,count_rate_hz,which")->required();
    ratefit->add_flag("--poisson-weighted", poisson_weighted, "weight points by 1/count");
    ratefit->add_flag("--nonnegative", nonnegative, "constrain coefficients >= 0");
    ratefit->add_option("--bandwidth-nm", bandwidth_nm, "report brightness over this bandwidth");
    ratefit->add_option("--loss-db", loss_db, "total loss for the brightness correction");
    add_common(ratefit, false);

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    if (help_config) {
        std::cout << config_schema();
        return kExitOk;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return kExitConfig;
    }

    try {
        if (simulate->parsed())
            return cmd_simulate(opts);
        if (sync->parsed())
            return cmd_sync(opts, file_a, file_b);
        if (coincide->parsed())
            return cmd_coincide(opts, file_a, file_b, delay_ps, delay_opt->count() > 0,
                                histogram_path);
        if (chsh->parsed())
            return cmd_chsh(opts);
        if (ratefit->parsed())
            return cmd_ratefit(opts, sweep_path, poisson_weighted, nonnegative, bandwidth_nm,
                               loss_db);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const SyncError& e) {
        std::cerr << "sync failure: " << e.what() << '\n';
        return kExitSync;
    } catch (const TagFileError& e) {
        std::cerr << "tag file error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitConfig;
}

} // namespace pairlink::cli
