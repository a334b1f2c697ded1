#pragma once

// Phoenix-format reader: an ASCII header of `key= value` lines opened by a
// line containing "PhoenixHeaderVer" and closed by "[EndofPhoenixHeader]",
// followed by big-endian float32 payload, magnitude block then phase
// block, row-major.

#include <cstring>
#include <map>
#include <string>

#include "osrk/common.hpp"

namespace osrk {

class MstarParseError : public DataError {
public:
    enum class Kind { missing_header, missing_terminator, missing_key, payload_size_mismatch };
    Kind kind;
    size_t offset;
    MstarParseError(Kind k, size_t off, const std::string& msg)
        : DataError(msg + " (byte offset " + std::to_string(off) + ")"), kind(k), offset(off) {}
};

struct MstarFile {
    int rows = 0;
    int cols = 0;
    RealMatrix magnitude;
    RealMatrix phase;
    std::map<std::string, std::string> header;
};

inline MstarFile parse_mstar_bytes(const std::string& bytes) {
    using Kind = MstarParseError::Kind;
    size_t pos = 0;
    auto next_line = [&](size_t& cursor) -> std::string {
        size_t start = cursor;
        while (cursor < bytes.size() && bytes[cursor] != '\n') ++cursor;
        std::string line = bytes.substr(start, cursor - start);
        if (cursor < bytes.size()) ++cursor;  // eat the newline
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };

    // locate the opening line
    bool opened = false;
    size_t scan = 0;
    while (scan < bytes.size()) {
        size_t line_start = scan;
        std::string line = next_line(scan);
        if (line.find("PhoenixHeaderVer") != std::string::npos) {
            opened = true;
            pos = scan;
            (void)line_start;
            break;
        }
        // give up if the first lines look binary
        if (line_start > 4096) break;
    }
    if (!opened)
        throw MstarParseError(Kind::missing_header, 0, "no PhoenixHeaderVer line found");

    MstarFile out;
    bool terminated = false;
    while (pos < bytes.size()) {
        size_t line_start = pos;
        std::string line = next_line(pos);
        if (line.find("[EndofPhoenixHeader]") != std::string::npos) {
            terminated = true;
            break;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t");
            size_t b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        out.header[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        (void)line_start;
    }
    if (!terminated)
        throw MstarParseError(Kind::missing_terminator, bytes.size(),
                              "header terminator [EndofPhoenixHeader] not found");

    auto int_key = [&](const char* key) {
        auto it = out.header.find(key);
        if (it == out.header.end())
            throw MstarParseError(Kind::missing_key, pos, std::string("missing header key ") + key);
        try {
            return std::stoi(it->second);
        } catch (const std::exception&) {
            throw MstarParseError(Kind::missing_key, pos,
                                  std::string("unparseable header key ") + key + "='" + it->second + "'");
        }
    };
    out.rows = int_key("NumberOfRows");
    out.cols = int_key("NumberOfColumns");
    if (out.rows < 1 || out.cols < 1)
        throw MstarParseError(Kind::missing_key, pos, "non-positive image dimensions");

    const size_t n = static_cast<size_t>(out.rows) * static_cast<size_t>(out.cols);
    const size_t expect = 2 * n * 4;
    const size_t have = bytes.size() - pos;
    if (have != expect)
        throw MstarParseError(Kind::payload_size_mismatch, pos,
                              "payload is " + std::to_string(have) + " bytes, expected " +
                              std::to_string(expect));

    auto read_block = [&](size_t base) {
        RealMatrix m(out.rows, out.cols);
        const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data()) + base;
        for (size_t i = 0; i < n; ++i) {
            uint32_t bits = (static_cast<uint32_t>(p[4 * i]) << 24) |
                            (static_cast<uint32_t>(p[4 * i + 1]) << 16) |
                            (static_cast<uint32_t>(p[4 * i + 2]) << 8) |
                            static_cast<uint32_t>(p[4 * i + 3]);
            float f;
            std::memcpy(&f, &bits, 4);
            m.v[i] = static_cast<double>(f);
        }
        return m;
    };
    out.magnitude = read_block(pos);
    out.phase = read_block(pos + n * 4);
    return out;
}

}  // namespace osrk
