#pragma once

#include "pairlink/pipeline.hpp"
#include "pairlink/source.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace pairlink {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SettingPair {
    double theta_a_deg = 0.0;
    double theta_b_deg = 0.0;
};

struct AnalysisConfig {
    std::int64_t window_ps = 1000;                 // ~3x the 0.322 ns FWHM
    std::int64_t search_half_range_ps = 1'000'000'000;
    std::int64_t coarse_bin_ps = 1000;
    std::int64_t fine_half_range_ps = 10'000;
    int accidental_offsets = 10;
    double setting_duration_s = 10.0; // per CHSH analyzer combination
    // canonical CHSH angles; overridable per config
    std::vector<SettingPair> settings = {{0.0, 22.5}, {0.0, 67.5}, {45.0, 22.5}, {45.0, 67.5}};
};

struct RunConfig {
    SourceConfig source;
    int active_pair = 0; // ChannelPair.index used by pipeline commands
    NodeConfig alice;
    NodeConfig bob;
    AnalysisConfig analysis;
    double duration_s = 1.0;
    std::uint64_t seed = 0; // mandatory: 0 means "not set yet"
    std::string config_hash; // fnv1a64 hex of the raw config text

    const ChannelPair& active_channel_pair() const;
};

// Accepts the key=value section format or JSON (first non-space byte '{').
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<text>");

// Canonical schema listing every recognized section and key.
const char* config_schema();

// Seed fan-out: sub-seeds not set explicitly in the config are derived from
// the master seed so one integer pins the whole run.
void finalize_seeds(RunConfig& cfg);

} // namespace pairlink
