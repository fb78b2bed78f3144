#include "pairlink/time_tags.hpp"

#include <algorithm>
#include <cmath>

namespace pairlink {

bool is_time_sorted(std::span<const TimeTag> tags) {
    return std::is_sorted(tags.begin(), tags.end(),
                          [](const TimeTag& a, const TimeTag& b) { return a < b; });
}

void validate_stream(const TagStream& s, bool require_nonnegative,
                     bool require_resolution_multiple) {
    if (s.resolution_ps <= 0)
        throw std::invalid_argument("TagStream: resolution_ps must be positive");
    if (s.pps_period_ps <= 0)
        throw std::invalid_argument("TagStream: pps_period_ps must be positive");
    if (!is_time_sorted(s.tags))
        throw std::invalid_argument("TagStream: tags not sorted by (t_ps, channel)");
    for (const TimeTag& t : s.tags) {
        if (require_nonnegative && t.t_ps < 0)
            throw std::invalid_argument("TagStream: negative timestamp");
        if (require_resolution_multiple && t.t_ps % s.resolution_ps != 0)
            throw std::invalid_argument("TagStream: timestamp not a multiple of resolution_ps");
    }
}

std::int64_t quantize(double t_true_ps, std::int64_t resolution_ps) {
    if (resolution_ps <= 0)
        throw std::invalid_argument("quantize: resolution_ps must be positive");
    if (t_true_ps < 0.0)
        throw std::invalid_argument("quantize: negative time precedes the epoch");
    // llround rounds half away from zero.
    return resolution_ps * std::llround(t_true_ps / static_cast<double>(resolution_ps));
}

std::vector<TagBlock> split_into_blocks(const TagStream& stream) {
    std::vector<TagBlock> blocks;
    if (stream.tags.empty())
        return blocks;
    if (!is_time_sorted(stream.tags))
        throw std::invalid_argument("split_into_blocks: stream not sorted");
    if (stream.tags.front().t_ps < 0)
        throw std::invalid_argument("split_into_blocks: negative timestamp");

    const std::int64_t period = stream.pps_period_ps;
    const std::size_t last_index =
        static_cast<std::size_t>(stream.tags.back().t_ps / period);
    blocks.reserve(last_index + 1);

    std::size_t begin = 0;
    for (std::size_t b = 0; b <= last_index; ++b) {
        const std::int64_t upper = static_cast<std::int64_t>(b + 1) * period;
        std::size_t end = begin;
        while (end < stream.tags.size() && stream.tags[end].t_ps < upper)
            ++end;
        blocks.push_back({b, std::span<const TimeTag>(stream.tags.data() + begin, end - begin)});
        begin = end;
    }
    return blocks;
}

TagStream merge_blocks(const TagStream& source, const std::vector<TagBlock>& blocks) {
    TagStream out;
    out.resolution_ps = source.resolution_ps;
    out.pps_period_ps = source.pps_period_ps;
    out.metadata = source.metadata;
    for (const TagBlock& b : blocks)
        out.tags.insert(out.tags.end(), b.tags.begin(), b.tags.end());
    return out;
}

TagStream filter_channel(const TagStream& s, std::uint8_t channel) {
    TagStream out;
    out.resolution_ps = s.resolution_ps;
    out.pps_period_ps = s.pps_period_ps;
    out.metadata = s.metadata;
    for (const TimeTag& t : s.tags)
        if (t.channel == channel)
            out.tags.push_back(t);
    return out;
}

} // namespace pairlink
