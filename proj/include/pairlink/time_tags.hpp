#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pairlink {

// One detection event. Times are integer picoseconds from the run epoch.
// Signed so that sync-corrected streams (shifted by -dT_i) keep their early
// tags; acquisition streams are always >= 0 and that is enforced where they
// are produced (quantize, file read).
struct TimeTag {
    std::int64_t t_ps = 0;
    std::uint8_t channel = 0;

    friend bool operator==(const TimeTag&, const TimeTag&) = default;
    friend bool operator<(const TimeTag& a, const TimeTag& b) {
        return a.t_ps != b.t_ps ? a.t_ps < b.t_ps : a.channel < b.channel;
    }
};

constexpr std::int64_t kDefaultResolutionPs = 156;
constexpr std::int64_t kPpsPeriodPs = 1'000'000'000'000; // 1 s

struct TagStream {
    std::vector<TimeTag> tags;
    std::int64_t resolution_ps = kDefaultResolutionPs;
    std::int64_t pps_period_ps = kPpsPeriodPs;
    std::map<std::string, std::string> metadata;

    std::size_t size() const { return tags.size(); }
    bool empty() const { return tags.empty(); }
};

// Contiguous slice of a TagStream covering [index*pps_period, (index+1)*pps_period).
struct TagBlock {
    std::size_t index = 0;
    std::span<const TimeTag> tags;
};

// Throws std::invalid_argument naming the violated invariant.
void validate_stream(const TagStream& s, bool require_nonnegative = true,
                     bool require_resolution_multiple = true);

bool is_time_sorted(std::span<const TimeTag> tags);

// resolution_ps * round(t/resolution_ps), round half away from zero.
// Negative input is an error: the simulation epoch precedes nothing.
std::int64_t quantize(double t_true_ps, std::int64_t resolution_ps);

// All blocks from 0 through the last occupied index, empty ones included, so
// block k of one stream always lines up with block k of another.
std::vector<TagBlock> split_into_blocks(const TagStream& stream);

// Inverse of split_into_blocks (concatenation); used by the round-trip property.
TagStream merge_blocks(const TagStream& source, const std::vector<TagBlock>& blocks);

// Sub-stream of one detector channel, ordering preserved.
TagStream filter_channel(const TagStream& s, std::uint8_t channel);

} // namespace pairlink
