#include "pairlink/tag_file.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

using namespace pairlink;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    return fs::temp_directory_path() / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("tag file round trip is bit exact") {
    TagStream s;
    s.resolution_ps = 156;
    s.tags = {{0, 0}, {156, 2}, {312, 1}};
    const fs::path p1 = temp_file("pairlink_roundtrip1.ptag");
    const fs::path p2 = temp_file("pairlink_roundtrip2.ptag");
    write_tag_file(s, p1);
    const TagStream r = read_tag_file(p1);
    CHECK(r.tags == s.tags);
    CHECK(r.resolution_ps == 156);
    write_tag_file(r, p2);
    CHECK(slurp(p1) == slurp(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("bad magic is a distinct error") {
    const fs::path p = temp_file("pairlink_badmagic.ptag");
    {
        std::ofstream out(p, std::ios::binary);
        out << "XTAG";
        std::string rest(14, '\0');
        out.write(rest.data(), static_cast<std::streamsize>(rest.size()));
    }
    try {
        read_tag_file(p);
        FAIL("expected TagFileError");
    } catch (const TagFileError& e) {
        CHECK(e.code() == TagFileErrc::bad_magic);
    }
    fs::remove(p);
}

TEST_CASE("truncated record is a distinct error") {
    TagStream s;
    s.resolution_ps = 1;
    s.tags = {{1, 0}, {2, 0}};
    const fs::path p = temp_file("pairlink_trunc.ptag");
    write_tag_file(s, p);
    fs::resize_file(p, fs::file_size(p) - 5);
    try {
        read_tag_file(p);
        FAIL("expected TagFileError");
    } catch (const TagFileError& e) {
        CHECK(e.code() == TagFileErrc::truncated);
    }
    fs::remove(p);
}

TEST_CASE("unsorted payload is rejected") {
    // hand-build a file with two out-of-order records
    const fs::path p = temp_file("pairlink_unsorted.ptag");
    {
        std::ofstream out(p, std::ios::binary);
        const unsigned char header[18] = {'P', 'T', 'A', 'G', 1, 0, 1, 0,
                                          0,   0,   2,   0,   0, 0, 0, 0,
                                          0,   0};
        out.write(reinterpret_cast<const char*>(header), 18);
        unsigned char rec[16] = {};
        rec[0] = 9; // t = 9
        out.write(reinterpret_cast<const char*>(rec), 16);
        rec[0] = 3; // t = 3 < 9
        out.write(reinterpret_cast<const char*>(rec), 16);
    }
    try {
        read_tag_file(p);
        FAIL("expected TagFileError");
    } catch (const TagFileError& e) {
        CHECK(e.code() == TagFileErrc::unsorted_payload);
    }
    fs::remove(p);
}

TEST_CASE("nonzero padding is rejected") {
    const fs::path p = temp_file("pairlink_pad.ptag");
    TagStream s;
    s.resolution_ps = 1;
    s.tags = {{1, 0}};
    write_tag_file(s, p);
    {
        std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(18 + 12); // inside the pad bytes of record 0
        const char junk = 0x7f;
        f.write(&junk, 1);
    }
    try {
        read_tag_file(p);
        FAIL("expected TagFileError");
    } catch (const TagFileError& e) {
        CHECK(e.code() == TagFileErrc::nonzero_padding);
    }
    fs::remove(p);
}

TEST_CASE("negative timestamps cannot be written") {
    TagStream s;
    s.resolution_ps = 1;
    s.tags = {{-5, 0}, {1, 0}};
    const fs::path p = temp_file("pairlink_neg.ptag");
    try {
        write_tag_file(s, p);
        FAIL("expected TagFileError");
    } catch (const TagFileError& e) {
        CHECK(e.code() == TagFileErrc::negative_time);
    }
    fs::remove(p);
}

TEST_CASE("a million-tag file survives the trip with no loss") {
    TagStream s = test::poisson_stream(1e6, 1.0, 99, 156);
    REQUIRE(s.tags.size() > 900'000);
    const fs::path p = temp_file("pairlink_big.ptag");
    write_tag_file(s, p);
    const TagStream r = read_tag_file(p);
    CHECK(r.tags.size() == s.tags.size());
    CHECK(r.tags == s.tags);
    fs::remove(p);
}

TEST_CASE("file round trip is the identity over random valid streams") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const std::int64_t res = 1 + static_cast<std::int64_t>(rng.uniform() * 500);
        TagStream s;
        s.resolution_ps = res;
        std::int64_t t = 0;
        const int n = static_cast<int>(rng.uniform() * 200);
        for (int i = 0; i < n; ++i) {
            t += res * static_cast<std::int64_t>(rng.uniform() * 10);
            s.tags.push_back({t, static_cast<std::uint8_t>(rng.next_u64() % 4)});
        }
        std::sort(s.tags.begin(), s.tags.end());
        const fs::path p = temp_file("pairlink_prop.ptag");
        write_tag_file(s, p);
        const TagStream r = read_tag_file(p);
        CHECK(r.tags == s.tags);
        CHECK(r.resolution_ps == s.resolution_ps);
        fs::remove(p);
    }
}
