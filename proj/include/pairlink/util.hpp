#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

namespace pairlink {

// Shortest round-trip decimal form; keeps CSV/JSON exports byte-stable.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// FNV-1a 64-bit over the raw config text; a stable run identifier carried by
// every export, not a cryptographic digest.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

} // namespace pairlink
