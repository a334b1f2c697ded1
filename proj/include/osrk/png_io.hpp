#pragma once

// Minimal PNG support: reads 8-/16-bit grayscale (non-interlaced), writes
// 8-bit grayscale. Deflate via zlib; chunk plumbing and row filters here.

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "osrk/common.hpp"

namespace osrk {

namespace png_detail {

inline void put_u32be(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>(v & 0xFF));
}

inline uint32_t get_u32be(const unsigned char* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

inline void put_chunk(std::string& out, const char type[4], const std::string& data) {
    put_u32be(out, static_cast<uint32_t>(data.size()));
    std::string body(type, 4);
    body += data;
    out += body;
    put_u32be(out, static_cast<uint32_t>(::crc32(0, reinterpret_cast<const Bytef*>(body.data()),
                                                 static_cast<uInt>(body.size()))));
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace png_detail

// values clamped to [0,255] and rounded
inline std::string encode_png_gray8(const RealMatrix& img) {
    using namespace png_detail;
    if (img.rows < 1 || img.cols < 1) throw ArgumentError("encode_png_gray8: empty image");
    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_u32be(ihdr, static_cast<uint32_t>(img.cols));
    put_u32be(ihdr, static_cast<uint32_t>(img.rows));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(0);   // grayscale
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter method
    ihdr.push_back(0);   // no interlace
    put_chunk(out, "IHDR", ihdr);

    std::string raw;
    raw.reserve(static_cast<size_t>(img.rows) * (img.cols + 1));
    for (int r = 0; r < img.rows; ++r) {
        raw.push_back(0);  // filter: none
        for (int c = 0; c < img.cols; ++c) {
            double x = img(r, c);
            int q = static_cast<int>(std::lround(std::min(255.0, std::max(0.0, x))));
            raw.push_back(static_cast<char>(q));
        }
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::string packed(bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(packed.data()), &bound,
                  reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                  9) != Z_OK)
        throw IoError("encode_png_gray8: deflate failed");
    packed.resize(bound);
    put_chunk(out, "IDAT", packed);
    put_chunk(out, "IEND", "");
    return out;
}

// min-max normalization to [0,255]; constant inputs map to 0
inline RealMatrix normalize_for_display(const RealMatrix& m) {
    double lo = m.v.empty() ? 0.0 : m.v[0], hi = lo;
    for (double x : m.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    RealMatrix out(m.rows, m.cols);
    if (hi > lo)
        for (size_t i = 0; i < m.v.size(); ++i) out.v[i] = (m.v[i] - lo) / (hi - lo) * 255.0;
    return out;
}

// Tiles per-cell min-max normalized images into a near-square grid with a
// 1-pixel separator, in the given order.
inline RealMatrix render_montage(const std::vector<RealMatrix>& cells) {
    if (cells.empty()) throw ArgumentError("render_montage: no images");
    const int ch = cells[0].rows, cw = cells[0].cols;
    for (const auto& c : cells)
        if (c.rows != ch || c.cols != cw)
            throw ShapeError("render_montage: cells must share one shape");
    const int n = static_cast<int>(cells.size());
    const int ncols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const int nrows = (n + ncols - 1) / ncols;
    RealMatrix out(nrows * (ch + 1) - 1, ncols * (cw + 1) - 1);
    for (int i = 0; i < n; ++i) {
        RealMatrix cell = normalize_for_display(cells[static_cast<size_t>(i)]);
        const int r0 = (i / ncols) * (ch + 1);
        const int c0 = (i % ncols) * (cw + 1);
        for (int r = 0; r < ch; ++r)
            for (int c = 0; c < cw; ++c) out(r0 + r, c0 + c) = cell(r, c);
    }
    return out;
}

// Returns raw code values (0..255 or 0..65535) as doubles.
inline RealMatrix decode_png_gray(const std::string& bytes) {
    using namespace png_detail;
    if (bytes.size() < 8 || std::memcmp(bytes.data(), "\x89PNG\r\n\x1a\n", 8) != 0)
        throw DataError("png: bad signature");
    size_t pos = 8;
    int width = 0, height = 0, depth = 0, color = -1;
    std::string idat;
    bool saw_ihdr = false;
    while (pos + 8 <= bytes.size()) {
        uint32_t len = get_u32be(reinterpret_cast<const unsigned char*>(bytes.data() + pos));
        std::string type = bytes.substr(pos + 4, 4);
        if (pos + 12 + len > bytes.size()) throw DataError("png: truncated chunk " + type);
        const char* data = bytes.data() + pos + 8;
        if (type == "IHDR") {
            if (len != 13) throw DataError("png: bad IHDR length");
            width = static_cast<int>(get_u32be(reinterpret_cast<const unsigned char*>(data)));
            height = static_cast<int>(get_u32be(reinterpret_cast<const unsigned char*>(data + 4)));
            depth = static_cast<unsigned char>(data[8]);
            color = static_cast<unsigned char>(data[9]);
            if (static_cast<unsigned char>(data[12]) != 0)
                throw DataError("png: interlaced images are not supported");
            saw_ihdr = true;
        } else if (type == "IDAT") {
            idat.append(data, len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr) throw DataError("png: missing IHDR");
    if (color != 0) throw DataError("png: only grayscale (color type 0) is supported");
    if (depth != 8 && depth != 16) throw DataError("png: only 8/16-bit depth is supported");
    if (width < 1 || height < 1) throw DataError("png: bad dimensions");

    const int bpp = depth / 8;
    const size_t stride = static_cast<size_t>(width) * bpp;
    const size_t raw_size = (stride + 1) * static_cast<size_t>(height);
    std::string raw(raw_size, '\0');
    uLongf got = static_cast<uLongf>(raw_size);
    int zrc = uncompress(reinterpret_cast<Bytef*>(raw.data()), &got,
                         reinterpret_cast<const Bytef*>(idat.data()), static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || got != raw_size) throw DataError("png: inflate failed");

    // undo per-row filters in place
    std::vector<unsigned char> prev(stride, 0);
    RealMatrix img(height, width);
    std::vector<unsigned char> cur(stride, 0);
    for (int r = 0; r < height; ++r) {
        const unsigned char* row =
            reinterpret_cast<const unsigned char*>(raw.data()) + static_cast<size_t>(r) * (stride + 1);
        const int filter = row[0];
        const unsigned char* src = row + 1;
        for (size_t i = 0; i < stride; ++i) {
            const int a = i >= static_cast<size_t>(bpp) ? cur[i - bpp] : 0;
            const int b = prev[i];
            const int c = i >= static_cast<size_t>(bpp) ? prev[i - bpp] : 0;
            int x = src[i];
            switch (filter) {
                case 0: break;
                case 1: x += a; break;
                case 2: x += b; break;
                case 3: x += (a + b) / 2; break;
                case 4: x += paeth(a, b, c); break;
                default: throw DataError("png: unknown filter " + std::to_string(filter));
            }
            cur[i] = static_cast<unsigned char>(x & 0xFF);
        }
        for (int c = 0; c < width; ++c) {
            img(r, c) = bpp == 1 ? static_cast<double>(cur[static_cast<size_t>(c)])
                                 : static_cast<double>((cur[static_cast<size_t>(c) * 2] << 8) |
                                                       cur[static_cast<size_t>(c) * 2 + 1]);
        }
        prev = cur;
    }
    return img;
}

}  // namespace osrk
