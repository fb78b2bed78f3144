#pragma once

#include "pairlink/time_tags.hpp"

#include <filesystem>
#include <stdexcept>

namespace pairlink {

enum class TagFileErrc {
    io,             // open/read/write failure
    bad_magic,      // leading bytes are not "PTAG"
    bad_version,    // unsupported version field
    bad_header,     // zero resolution or header shorter than 18 bytes
    truncated,      // payload ends mid-record or before the declared count
    nonzero_padding,
    unsorted_payload,
    negative_time,  // write-side: stream holds tags below the epoch
};

class TagFileError : public std::runtime_error {
public:
    TagFileError(TagFileErrc c, const std::string& msg)
        : std::runtime_error(msg), code_(c) {}
    TagFileErrc code() const { return code_; }

private:
    TagFileErrc code_;
};

// PTAG binary format, little-endian:
//   bytes 0-3   magic "PTAG"
//   bytes 4-5   version = 1 (u16)
//   bytes 6-9   resolution_ps (u32)
//   bytes 10-17 tag count (u64)
//   records     u64 t_ps, u8 channel, 7 zero pad bytes (16 bytes each)
TagStream read_tag_file(const std::filesystem::path& path);
void write_tag_file(const TagStream& stream, const std::filesystem::path& path);

} // namespace pairlink
