#include "pairlink/config.hpp"

#include "pairlink/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace pairlink {

namespace {

using json = nlohmann::json;

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return std::string(s.substr(b, e - b));
}

// key=value sections -> the same json shape the JSON input uses, so one
// typed extractor serves both encodings. Repeated `pair =` / `setting =`
// lines become the "pairs" / "settings" arrays.
json ini_to_json(const std::string& text, const std::string& origin) {
    json root = json::object();
    std::string section;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        const std::string t = trim(line);
        if (t.empty())
            continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
            if (!root.contains(section))
                root[section] = json::object();
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (section.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": key '" + key +
                              "' outside any [section]");
        json& sec = root[section];
        if (key == "pair" || key == "setting") {
            sec[key + "s"].push_back(value);
        } else {
            if (sec.contains(key))
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                                  section + "." + key + "'");
            sec[key] = value;
        }
    }
    return root;
}

double as_double(const json& v, const std::string& field) {
    if (v.is_number())
        return v.get<double>();
    if (v.is_string()) {
        const std::string s = trim(v.get<std::string>());
        try {
            std::size_t pos = 0;
            const double d = std::stod(s, &pos);
            if (pos == s.size())
                return d;
        } catch (...) {
        }
    }
    throw ConfigError("field '" + field + "': expected a number");
}

std::int64_t as_int(const json& v, const std::string& field) {
    if (v.is_number_integer())
        return v.get<std::int64_t>();
    if (v.is_string()) {
        const std::string s = trim(v.get<std::string>());
        std::int64_t out = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
        if (res.ec == std::errc() && res.ptr == s.data() + s.size())
            return out;
        // tolerate exponent forms like 1e9 for integer fields
        const double d = as_double(v, field);
        if (std::floor(d) == d && std::abs(d) < 9.1e18)
            return static_cast<std::int64_t>(d);
    }
    throw ConfigError("field '" + field + "': expected an integer");
}

std::uint64_t as_u64(const json& v, const std::string& field) {
    if (v.is_number_unsigned())
        return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        const auto i = v.get<std::int64_t>();
        if (i >= 0)
            return static_cast<std::uint64_t>(i);
    }
    if (v.is_string()) {
        const std::string s = trim(v.get<std::string>());
        std::uint64_t out = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
        if (res.ec == std::errc() && res.ptr == s.data() + s.size())
            return out;
    }
    throw ConfigError("field '" + field + "': expected a non-negative integer");
}

bool as_bool(const json& v, const std::string& field) {
    if (v.is_boolean())
        return v.get<bool>();
    if (v.is_string()) {
        const std::string s = trim(v.get<std::string>());
        if (s == "true" || s == "1" || s == "yes" || s == "on")
            return true;
        if (s == "false" || s == "0" || s == "no" || s == "off")
            return false;
    }
    throw ConfigError("field '" + field + "': expected a boolean");
}

std::vector<double> csv_numbers(const std::string& s, const std::string& field) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (t.empty())
            throw ConfigError("field '" + field + "': empty element in '" + s + "'");
        out.push_back(as_double(json(t), field));
    }
    return out;
}

// Tracks which keys were consumed so typos are reported, not ignored.
class Section {
public:
    Section(const json& root, std::string name) : name_(std::move(name)) {
        if (root.contains(name_))
            obj_ = &root.at(name_);
    }

    bool present() const { return obj_ != nullptr; }

    const json* find(const std::string& key) {
        seen_.insert(key);
        if (obj_ && obj_->contains(key))
            return &obj_->at(key);
        return nullptr;
    }

    double number(const std::string& key, double fallback) {
        const json* v = find(key);
        return v ? as_double(*v, name_ + "." + key) : fallback;
    }
    std::int64_t integer(const std::string& key, std::int64_t fallback) {
        const json* v = find(key);
        return v ? as_int(*v, name_ + "." + key) : fallback;
    }
    std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
        const json* v = find(key);
        return v ? as_u64(*v, name_ + "." + key) : fallback;
    }
    bool boolean(const std::string& key, bool fallback) {
        const json* v = find(key);
        return v ? as_bool(*v, name_ + "." + key) : fallback;
    }

    void reject_unknown() const {
        if (!obj_)
            return;
        for (auto it = obj_->begin(); it != obj_->end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError("unknown key '" + name_ + "." + it.key() + "'");
    }

private:
    const json* obj_ = nullptr;
    std::string name_;
    std::set<std::string> seen_;
};

ChannelPair parse_pair(const json& v, const std::string& field) {
    ChannelPair p;
    if (v.is_object()) {
        static const char* keys[] = {"index", "detuning_ghz", "a", "b_s", "b_i", "c_s", "c_i"};
        for (auto it = v.begin(); it != v.end(); ++it) {
            if (std::find_if(std::begin(keys), std::end(keys), [&](const char* k) {
                    return it.key() == k;
                }) == std::end(keys))
                throw ConfigError("field '" + field + "': unknown pair key '" + it.key() + "'");
        }
        p.index = static_cast<int>(as_int(v.at("index"), field + ".index"));
        p.detuning_ghz = as_double(v.at("detuning_ghz"), field + ".detuning_ghz");
        p.a = as_double(v.at("a"), field + ".a");
        p.b_s = v.contains("b_s") ? as_double(v.at("b_s"), field + ".b_s") : 0.0;
        p.b_i = v.contains("b_i") ? as_double(v.at("b_i"), field + ".b_i") : 0.0;
        p.c_s = v.contains("c_s") ? as_double(v.at("c_s"), field + ".c_s") : 0.0;
        p.c_i = v.contains("c_i") ? as_double(v.at("c_i"), field + ".c_i") : 0.0;
        return p;
    }
    std::vector<double> n;
    if (v.is_array()) {
        for (std::size_t i = 0; i < v.size(); ++i)
            n.push_back(as_double(v[i], field));
    } else if (v.is_string()) {
        n = csv_numbers(v.get<std::string>(), field);
    } else {
        throw ConfigError("field '" + field + "': expected \"index,detuning_ghz,a,b_s,b_i,c_s,c_i\"");
    }
    if (n.size() < 3 || n.size() > 7)
        throw ConfigError("field '" + field + "': expected 3..7 values (index,detuning_ghz,a[,b_s,b_i,c_s,c_i])");
    n.resize(7, 0.0);
    p.index = static_cast<int>(n[0]);
    p.detuning_ghz = n[1];
    p.a = n[2];
    p.b_s = n[3];
    p.b_i = n[4];
    p.c_s = n[5];
    p.c_i = n[6];
    return p;
}

SettingPair parse_setting(const json& v, const std::string& field) {
    std::vector<double> n;
    if (v.is_array()) {
        for (std::size_t i = 0; i < v.size(); ++i)
            n.push_back(as_double(v[i], field));
    } else if (v.is_string()) {
        n = csv_numbers(v.get<std::string>(), field);
    } else {
        throw ConfigError("field '" + field + "': expected \"theta_a_deg,theta_b_deg\"");
    }
    if (n.size() != 2)
        throw ConfigError("field '" + field + "': expected exactly two angles (deg)");
    return {n[0], n[1]};
}

void load_node(const json& root, const std::string& suffix, NodeConfig& node) {
    Section link(root, "link_" + suffix);
    node.link.length_km = link.number("length_km", node.link.length_km);
    node.link.delay_us_per_km = link.number("delay_us_per_km", node.link.delay_us_per_km);
    node.link.loss_db_per_km = link.number("loss_db_per_km", node.link.loss_db_per_km);
    node.link.extra_loss_db = link.number("extra_loss_db", node.link.extra_loss_db);
    link.reject_unknown();

    Section det(root, "detector_" + suffix);
    node.detector.efficiency = det.number("efficiency", node.detector.efficiency);
    node.detector.jitter_sigma_ps = det.number("jitter_sigma_ps", node.detector.jitter_sigma_ps);
    node.detector.dark_rate_hz = det.number("dark_rate_hz", node.detector.dark_rate_hz);
    node.detector.resolution_ps = det.integer("resolution_ps", node.detector.resolution_ps);
    det.reject_unknown();

    Section clk(root, "clock_" + suffix);
    node.clock.initial_offset_ps = clk.integer("initial_offset_ps", node.clock.initial_offset_ps);
    node.clock.linear_rate = clk.number("linear_rate", node.clock.linear_rate);
    node.clock.random_walk_sigma_ps_per_sqrt_s =
        clk.number("random_walk_sigma_ps_per_sqrt_s", node.clock.random_walk_sigma_ps_per_sqrt_s);
    node.clock.white_sigma_ps = clk.number("white_sigma_ps", node.clock.white_sigma_ps);
    node.clock.rng_seed = clk.u64("seed", 0);
    clk.reject_unknown();
}

void validate(const RunConfig& cfg) {
    if (cfg.source.pump_power_mw < 0)
        throw ConfigError("field 'source.pump_power_mw': must be >= 0");
    if (cfg.source.visibility < 0.0 || cfg.source.visibility > 1.0)
        throw ConfigError("field 'source.visibility': must lie in [0,1]");
    if (cfg.source.pairs.empty())
        throw ConfigError("field 'source.pairs': at least one pair required");
    std::set<double> detunings;
    for (const ChannelPair& p : cfg.source.pairs) {
        if (p.detuning_ghz <= 0)
            throw ConfigError("field 'source.pairs': detuning_ghz must be positive (pair " +
                              std::to_string(p.index) + ")");
        if (p.a < 0 || p.b_s < 0 || p.b_i < 0 || p.c_s < 0 || p.c_i < 0)
            throw ConfigError("field 'source.pairs': negative coefficient (pair " +
                              std::to_string(p.index) + ")");
        if (!detunings.insert(p.detuning_ghz).second)
            throw ConfigError("field 'source.pairs': duplicate detuning " +
                              format_double(p.detuning_ghz) + " GHz");
    }
    const auto has_active = std::any_of(cfg.source.pairs.begin(), cfg.source.pairs.end(),
                                        [&](const ChannelPair& p) { return p.index == cfg.active_pair; });
    if (!has_active)
        throw ConfigError("field 'source.active_pair': no configured pair has index " +
                          std::to_string(cfg.active_pair));
    for (const char* who : {"a", "b"}) {
        const NodeConfig& n = who[0] == 'a' ? cfg.alice : cfg.bob;
        const std::string tag(who);
        if (n.link.length_km < 0 || n.link.loss_db_per_km < 0 || n.link.extra_loss_db < 0)
            throw ConfigError("field 'link_" + tag + "': negative length or loss");
        if (n.detector.efficiency < 0 || n.detector.efficiency > 1)
            throw ConfigError("field 'detector_" + tag + ".efficiency': must lie in [0,1]");
        if (n.detector.jitter_sigma_ps < 0 || n.detector.dark_rate_hz < 0)
            throw ConfigError("field 'detector_" + tag + "': negative jitter or dark rate");
        if (n.detector.resolution_ps <= 0)
            throw ConfigError("field 'detector_" + tag + ".resolution_ps': must be positive");
        if (n.clock.random_walk_sigma_ps_per_sqrt_s < 0 || n.clock.white_sigma_ps < 0)
            throw ConfigError("field 'clock_" + tag + "': negative noise sigma");
    }
    if (cfg.duration_s < 0)
        throw ConfigError("field 'run.duration_s': must be >= 0");
    if (cfg.analysis.window_ps <= 0)
        throw ConfigError("field 'analysis.window_ps': must be positive");
    if (cfg.analysis.search_half_range_ps <= 0 || cfg.analysis.coarse_bin_ps <= 0 ||
        cfg.analysis.fine_half_range_ps <= 0)
        throw ConfigError("field 'analysis': scan ranges and bins must be positive");
    if (cfg.analysis.accidental_offsets < 1)
        throw ConfigError("field 'analysis.accidental_offsets': must be >= 1");
    if (cfg.analysis.setting_duration_s <= 0)
        throw ConfigError("field 'analysis.setting_duration_s': must be positive");
    if (cfg.analysis.settings.size() != 4)
        throw ConfigError("field 'analysis.settings': exactly four analyzer combinations required");
}

} // namespace

const ChannelPair& RunConfig::active_channel_pair() const {
    for (const ChannelPair& p : source.pairs)
        if (p.index == active_pair)
            return p;
    throw ConfigError("field 'source.active_pair': no configured pair has index " +
                      std::to_string(active_pair));
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    json root;
    const std::size_t first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        try {
            root = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(origin + ": JSON parse error: " + e.what());
        }
    } else {
        root = ini_to_json(text, origin);
    }
    for (auto it = root.begin(); it != root.end(); ++it) {
        static const std::set<std::string> known = {
            "run",       "source",     "link_a",  "link_b",  "detector_a",
            "detector_b", "clock_a",   "clock_b", "analysis"};
        if (!known.count(it.key()))
            throw ConfigError("unknown section '" + it.key() + "'");
    }

    RunConfig cfg;
    cfg.config_hash = to_hex(fnv1a64(text));

    Section run(root, "run");
    cfg.seed = run.u64("seed", 0);
    cfg.duration_s = run.number("duration_s", cfg.duration_s);
    run.reject_unknown();

    Section src(root, "source");
    cfg.source.pump_power_mw = src.number("pump_power_mw", cfg.source.pump_power_mw);
    cfg.source.phase_theta = src.number("phase_theta_rad", cfg.source.phase_theta);
    cfg.source.visibility = src.number("visibility", cfg.source.visibility);
    cfg.source.single_nanowire = src.boolean("single_nanowire", cfg.source.single_nanowire);
    cfg.active_pair = static_cast<int>(src.integer("active_pair", cfg.active_pair));
    if (const json* pairs = src.find("pairs")) {
        if (!pairs->is_array())
            throw ConfigError("field 'source.pairs': expected an array");
        for (std::size_t i = 0; i < pairs->size(); ++i)
            cfg.source.pairs.push_back(
                parse_pair((*pairs)[i], "source.pairs[" + std::to_string(i) + "]"));
    }
    src.reject_unknown();
    if (cfg.active_pair == 0 && !cfg.source.pairs.empty())
        cfg.active_pair = cfg.source.pairs.front().index;

    load_node(root, "a", cfg.alice);
    load_node(root, "b", cfg.bob);

    Section ana(root, "analysis");
    cfg.analysis.window_ps = ana.integer("window_ps", cfg.analysis.window_ps);
    cfg.analysis.search_half_range_ps =
        ana.integer("search_half_range_ps", cfg.analysis.search_half_range_ps);
    cfg.analysis.coarse_bin_ps = ana.integer("coarse_bin_ps", cfg.analysis.coarse_bin_ps);
    cfg.analysis.fine_half_range_ps =
        ana.integer("fine_half_range_ps", cfg.analysis.fine_half_range_ps);
    cfg.analysis.accidental_offsets =
        static_cast<int>(ana.integer("accidental_offsets", cfg.analysis.accidental_offsets));
    cfg.analysis.setting_duration_s =
        ana.number("setting_duration_s", cfg.analysis.setting_duration_s);
    if (const json* settings = ana.find("settings")) {
        if (!settings->is_array())
            throw ConfigError("field 'analysis.settings': expected an array");
        cfg.analysis.settings.clear();
        for (std::size_t i = 0; i < settings->size(); ++i)
            cfg.analysis.settings.push_back(
                parse_setting((*settings)[i], "analysis.settings[" + std::to_string(i) + "]"));
    }
    ana.reject_unknown();

    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path.string());
}

void finalize_seeds(RunConfig& cfg) {
    if (cfg.seed == 0)
        throw ConfigError("field 'run.seed': mandatory (set it in the config or pass --seed)");
    cfg.source.rng_seed = derive_seed(cfg.seed, 0x50);
    if (cfg.alice.clock.rng_seed == 0 || cfg.alice.clock.rng_seed == 1)
        cfg.alice.clock.rng_seed = derive_seed(cfg.seed, 0xa1);
    if (cfg.bob.clock.rng_seed == 0 || cfg.bob.clock.rng_seed == 1)
        cfg.bob.clock.rng_seed = derive_seed(cfg.seed, 0xb1);
}

const char* config_schema() {
    return R"(# pairlink configuration schema
# Sections and keys (key = value format; JSON with the same section/key
# structure is accepted when the file starts with '{').

[run]
seed = <u64>                 # mandatory here or via --seed; no wall-clock seeding
duration_s = <real>          # acquisition length for simulate/sync runs

[source]
pump_power_mw = <real>
phase_theta_rad = <real>     # relative phase of the |VV> term (0 after QHQ compensation)
visibility = <real in [0,1]>
single_nanowire = <bool>     # doubles the pair-rate quadratic coefficient only
active_pair = <int>          # ChannelPair index used by pipeline commands
pair = index, detuning_ghz, a, b_s, b_i, c_s, c_i
#   a in s^-1 mW^-2 (SFWM pair rate), b in s^-1 mW^-1 (Raman noise per arm),
#   c in s^-1 (constant background per arm); repeat the line per channel pair

[link_a] / [link_b]          # node a = Alice (idler, local), b = Bob (signal)
length_km = <real>
delay_us_per_km = <real>     # default 5.0
loss_db_per_km = <real>
extra_loss_db = <real>

[detector_a] / [detector_b]
efficiency = <real in [0,1]>
jitter_sigma_ps = <real>
dark_rate_hz = <real>        # per detector channel
resolution_ps = <int>        # default 156

[clock_a] / [clock_b]
initial_offset_ps = <int>
linear_rate = <real>         # dimensionless drift (s per s)
random_walk_sigma_ps_per_sqrt_s = <real>
white_sigma_ps = <real>      # per-second 1PPS-disciplining phase scatter
seed = <u64>                 # 0 = derive from run.seed

[analysis]
window_ps = <int>            # coincidence window, default 1000
search_half_range_ps = <int> # initial offset scan half range, default 1e9
coarse_bin_ps = <int>        # first-pass scan bin, default 1000
fine_half_range_ps = <int>   # per-block drift scan half range, default 10000
accidental_offsets = <int>   # displaced windows for the accidental estimate
setting_duration_s = <real>  # acquisition per CHSH analyzer combination
setting = theta_a_deg, theta_b_deg   # repeat x4; defaults to 0/45 x 22.5/67.5
)";
}

} // namespace pairlink
