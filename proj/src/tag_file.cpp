#include "pairlink/tag_file.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <limits>

namespace pairlink {

namespace {

constexpr std::size_t kHeaderSize = 18;
constexpr std::size_t kRecordSize = 16;
constexpr std::uint16_t kVersion = 1;

// Explicit little-endian packing keeps files bit-exact on any host.
template <typename T>
void put_le(unsigned char* dst, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
        dst[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
}

template <typename T>
T get_le(const unsigned char* src) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        value |= static_cast<T>(src[i]) << (8 * i);
    return value;
}

} // namespace

TagStream read_tag_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw TagFileError(TagFileErrc::io, "cannot open " + path.string());

    std::array<unsigned char, kHeaderSize> header{};
    in.read(reinterpret_cast<char*>(header.data()), kHeaderSize);
    if (in.gcount() != static_cast<std::streamsize>(kHeaderSize))
        throw TagFileError(TagFileErrc::bad_header, path.string() + ": header shorter than 18 bytes");
    if (std::memcmp(header.data(), "PTAG", 4) != 0)
        throw TagFileError(TagFileErrc::bad_magic, path.string() + ": bad magic");
    const auto version = get_le<std::uint16_t>(header.data() + 4);
    if (version != kVersion)
        throw TagFileError(TagFileErrc::bad_version,
                           path.string() + ": unsupported version " + std::to_string(version));
    const auto resolution = get_le<std::uint32_t>(header.data() + 6);
    if (resolution == 0)
        throw TagFileError(TagFileErrc::bad_header, path.string() + ": zero resolution_ps");
    const auto count = get_le<std::uint64_t>(header.data() + 10);

    TagStream stream;
    stream.resolution_ps = resolution;
    stream.tags.reserve(count);

    std::array<unsigned char, kRecordSize> rec{};
    for (std::uint64_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(rec.data()), kRecordSize);
        if (in.gcount() != static_cast<std::streamsize>(kRecordSize))
            throw TagFileError(TagFileErrc::truncated,
                               path.string() + ": truncated record " + std::to_string(i));
        for (std::size_t p = 9; p < kRecordSize; ++p)
            if (rec[p] != 0)
                throw TagFileError(TagFileErrc::nonzero_padding,
                                   path.string() + ": nonzero padding in record " + std::to_string(i));
        const auto t = get_le<std::uint64_t>(rec.data());
        if (t > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
            throw TagFileError(TagFileErrc::bad_header,
                               path.string() + ": timestamp exceeds signed 64-bit range");
        stream.tags.push_back({static_cast<std::int64_t>(t), rec[8]});
    }
    if (!is_time_sorted(stream.tags))
        throw TagFileError(TagFileErrc::unsorted_payload, path.string() + ": unsorted payload");
    return stream;
}

void write_tag_file(const TagStream& stream, const std::filesystem::path& path) {
    if (!is_time_sorted(stream.tags))
        throw TagFileError(TagFileErrc::unsorted_payload, "write_tag_file: unsorted stream");
    for (const TimeTag& t : stream.tags)
        if (t.t_ps < 0)
            throw TagFileError(TagFileErrc::negative_time,
                               "write_tag_file: negative timestamp (PTAG stores u64)");
    if (stream.resolution_ps <= 0 ||
        stream.resolution_ps > std::numeric_limits<std::uint32_t>::max())
        throw TagFileError(TagFileErrc::bad_header, "write_tag_file: resolution_ps out of range");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw TagFileError(TagFileErrc::io, "cannot open " + path.string() + " for writing");

    std::array<unsigned char, kHeaderSize> header{};
    std::memcpy(header.data(), "PTAG", 4);
    put_le<std::uint16_t>(header.data() + 4, kVersion);
    put_le<std::uint32_t>(header.data() + 6, static_cast<std::uint32_t>(stream.resolution_ps));
    put_le<std::uint64_t>(header.data() + 10, stream.tags.size());
    out.write(reinterpret_cast<const char*>(header.data()), kHeaderSize);

    std::array<unsigned char, kRecordSize> rec{};
    for (const TimeTag& t : stream.tags) {
        put_le<std::uint64_t>(rec.data(), static_cast<std::uint64_t>(t.t_ps));
        rec[8] = t.channel;
        // rec[9..15] stay zero
        out.write(reinterpret_cast<const char*>(rec.data()), kRecordSize);
    }
    if (!out)
        throw TagFileError(TagFileErrc::io, "write failure on " + path.string());
}

} // namespace pairlink
