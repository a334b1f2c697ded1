#pragma once

// Shared primitives: error taxonomy (mapped to CLI exit codes), dense
// matrix containers, CRC32, and a small deterministic parallel-for.

#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace osrk {

inline constexpr const char* kToolVersion = "0.1.0";

// ============================================================
// Errors
// ============================================================
// Exit-code contract: 0 success, 2 config error, 3 data error,
// 4 numerical error.

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
    virtual int exit_code() const { return 1; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 2; }
};

// Inconsistent tensor/matrix extents. Configuration-class failure.
class ShapeError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 2; }
};

class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 3; }
};

class ArgumentError : public DataError {
public:
    using DataError::DataError;
};

class IoError : public DataError {
public:
    using DataError::DataError;
};

class NumericalError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 4; }
};

// ============================================================
// Dense matrices
// ============================================================

template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, T{}) {}

    T& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    const T& operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return v.size(); }
    bool square() const { return rows == cols; }
};

using RealMatrix = Mat<double>;
using ComplexMatrix = Mat<std::complex<double>>;

// ============================================================
// CRC32 (IEEE, reflected 0xEDB88320)
// ============================================================

inline uint32_t crc32_update(uint32_t crc, const void* data, size_t len) {
    static const auto table = [] {
        std::vector<uint32_t> t(256);
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const unsigned char*>(data);
    crc ^= 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i)
        crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

inline uint32_t crc32_of(const void* data, size_t len) { return crc32_update(0, data, len); }

// ============================================================
// Deterministic parallel-for
// ============================================================
// Each index writes only its own output slot, so the result is identical
// for any thread count. threads <= 1 runs inline.

inline void parallel_for(size_t n, int threads, const std::function<void(size_t)>& body) {
    if (threads <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) body(i);
        return;
    }
    size_t nt = std::min<size_t>(static_cast<size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (size_t t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            for (size_t i = t; i < n; i += nt) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace osrk
