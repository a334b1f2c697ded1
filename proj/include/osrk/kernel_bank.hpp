#pragma once

// Convolution-kernel banks synthesized from scattering-center responses.
// One kernel per (length, orientation) pair: simplified response ->
// centered magnitude image -> center crop -> optional normalization.
// Bank order is length-major, both grids ascending.

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "osrk/asc.hpp"
#include "osrk/common.hpp"
#include "osrk/kv_config.hpp"

namespace osrk {

enum class KernelNormalize { raw_magnitude, zero_mean_unit_l2 };

struct AscKernelSpec {
    int kernel_size = 11;  // r, odd
    std::vector<double> length_grid_m;
    std::vector<double> orientation_grid_deg;
    KernelNormalize normalize_mode = KernelNormalize::zero_mean_unit_l2;

    size_t bank_count() const { return length_grid_m.size() * orientation_grid_deg.size(); }

    void validate(const RadarParams& params) const {
        if (kernel_size < 1 || kernel_size % 2 == 0)
            throw ConfigError("AscKernelSpec.kernel_size: must be odd and positive, got " +
                              std::to_string(kernel_size));
        if (length_grid_m.empty()) throw ConfigError("AscKernelSpec.length_grid_m: must be non-empty");
        if (orientation_grid_deg.empty())
            throw ConfigError("AscKernelSpec.orientation_grid_deg: must be non-empty");
        for (double L : length_grid_m) {
            double p = L / params.spatial_resolution_m;
            double rounded = std::round(p);
            if (std::abs(p - rounded) > 1e-6 || rounded < 1 || rounded > kernel_size)
                throw ConfigError("AscKernelSpec.length_grid_m: " + std::to_string(L) +
                                  " is not p*resolution with integer p <= kernel_size");
        }
        for (double o : orientation_grid_deg)
            if (o < 0.0 || o > 90.0)
                throw ConfigError("AscKernelSpec.orientation_grid_deg: " + std::to_string(o) +
                                  " outside [0, 90]");
    }

    static AscKernelSpec from_kv(const KvConfig& kv) {
        AscKernelSpec s;
        s.kernel_size = static_cast<int>(kv.get_int("kernel_size"));
        s.length_grid_m = KvConfig::split_doubles("length_grid", kv.get("length_grid"));
        s.orientation_grid_deg =
            KvConfig::split_doubles("orientation_grid", kv.get("orientation_grid"));
        std::string mode = kv.get_or("normalize", "zero_mean_unit_l2");
        if (mode == "zero_mean_unit_l2")
            s.normalize_mode = KernelNormalize::zero_mean_unit_l2;
        else if (mode == "raw_magnitude")
            s.normalize_mode = KernelNormalize::raw_magnitude;
        else
            throw ConfigError("kernel spec: normalize must be zero_mean_unit_l2 or raw_magnitude");
        return s;
    }

    // Stock grids: lengths p*resolution for p = 1..r, orientations uniform
    // over [0, 90] with r points. Yields 100 / 441 / 961 kernels for
    // r = 11 / 21 / 31 at 0.3 m resolution.
    static AscKernelSpec stock(int r, double resolution_m = 0.3,
                               KernelNormalize mode = KernelNormalize::zero_mean_unit_l2) {
        if (r != 11 && r != 21 && r != 31)
            throw ConfigError("AscKernelSpec.stock: supported sizes are 11, 21, 31; got " +
                              std::to_string(r));
        AscKernelSpec s;
        s.kernel_size = r;
        s.normalize_mode = mode;
        // 11 -> 10 lengths (0.3..3.0) x 10 orientations (step 10 deg)
        // 21 -> 21 lengths (0.3..6.3) x 21 orientations (step 4.5 deg)
        // 31 -> 31 lengths (0.3..9.3) x 31 orientations (step 3 deg)
        int n = (r == 11) ? 10 : r;
        for (int p = 1; p <= n; ++p) s.length_grid_m.push_back(p * resolution_m);
        double step = 90.0 / (n - 1);
        for (int i = 0; i < n; ++i) s.orientation_grid_deg.push_back(i * step);
        return s;
    }
};

struct KernelBank {
    int kernel_size = 0;
    std::vector<RealMatrix> kernels;
    struct Meta {
        double length_m;
        double orientation_deg;
    };
    std::vector<Meta> meta;

    size_t count() const { return kernels.size(); }
};

inline RealMatrix normalize_kernel(RealMatrix k, KernelNormalize mode) {
    if (mode == KernelNormalize::raw_magnitude) return k;
    double mean = 0.0;
    for (double x : k.v) mean += x;
    mean /= static_cast<double>(k.v.size());
    double norm2 = 0.0;
    for (double& x : k.v) {
        x -= mean;
        norm2 += x * x;
    }
    double norm = std::sqrt(norm2);
    if (norm > 0)
        for (double& x : k.v) x /= norm;
    return k;
}

inline RealMatrix synthesize_kernel(double length_m, double orientation_deg,
                                    const FrequencyAspectGrid& grid, int kernel_size,
                                    KernelNormalize mode) {
    ScatteringCenter sc;
    sc.length_m = length_m;
    sc.orientation_deg = orientation_deg;
    ComplexMatrix spectrum = asc_response(sc, grid, ResponseMode::simplified);
    RealMatrix image = spectrum_to_image(spectrum);
    return normalize_kernel(crop_center(image, kernel_size), mode);
}

inline KernelBank build_kernel_bank(const AscKernelSpec& spec, const RadarParams& params,
                                    int threads = 1) {
    params.validate();
    spec.validate(params);
    FrequencyAspectGrid grid = make_radar_grid(params);
    if (spec.kernel_size > grid.rows())
        throw ConfigError("build_kernel_bank: kernel_size exceeds grid size");

    KernelBank bank;
    bank.kernel_size = spec.kernel_size;
    const size_t nL = spec.length_grid_m.size();
    const size_t nO = spec.orientation_grid_deg.size();
    bank.kernels.resize(nL * nO);
    bank.meta.resize(nL * nO);
    parallel_for(nL * nO, threads, [&](size_t idx) {
        double L = spec.length_grid_m[idx / nO];
        double phi = spec.orientation_grid_deg[idx % nO];
        bank.kernels[idx] = synthesize_kernel(L, phi, grid, spec.kernel_size, spec.normalize_mode);
        bank.meta[idx] = {L, phi};
    });
    return bank;
}

// ============================================================
// Bank file format
// ============================================================
// Little-endian: magic "ASCB", version u32 = 1, r u32, count u32, then
// count*r*r IEEE-754 f32 row-major per kernel in bank order. Sidecar CSV
// bank_meta.csv columns: index,L_m,phi_bar_deg.

namespace detail {
inline void put_u32(std::string& out, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                 static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    out.append(b, 4);
}
inline uint32_t get_u32(const std::string& s, size_t& pos) {
    if (pos + 4 > s.size()) throw DataError("bank file truncated at byte " + std::to_string(pos));
    uint32_t v = (static_cast<uint8_t>(s[pos])) | (static_cast<uint8_t>(s[pos + 1]) << 8) |
                 (static_cast<uint8_t>(s[pos + 2]) << 16) |
                 (static_cast<uint8_t>(s[pos + 3]) << 24);
    pos += 4;
    return v;
}
}  // namespace detail

inline std::string encode_kernel_bank(const KernelBank& bank) {
    std::string out;
    out.append("ASCB", 4);
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<uint32_t>(bank.kernel_size));
    detail::put_u32(out, static_cast<uint32_t>(bank.count()));
    for (const auto& k : bank.kernels) {
        for (double x : k.v) {
            float f = static_cast<float>(x);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            detail::put_u32(out, bits);
        }
    }
    return out;
}

inline KernelBank decode_kernel_bank(const std::string& bytes) {
    if (bytes.size() < 4 || bytes.compare(0, 4, "ASCB") != 0)
        throw DataError("bank file: bad magic");
    size_t pos = 4;
    uint32_t version = detail::get_u32(bytes, pos);
    if (version != 1) throw DataError("bank file: unsupported version " + std::to_string(version));
    uint32_t r = detail::get_u32(bytes, pos);
    uint32_t count = detail::get_u32(bytes, pos);
    KernelBank bank;
    bank.kernel_size = static_cast<int>(r);
    bank.kernels.resize(count);
    bank.meta.assign(count, {0.0, 0.0});
    for (uint32_t i = 0; i < count; ++i) {
        RealMatrix m(static_cast<int>(r), static_cast<int>(r));
        for (auto& x : m.v) {
            uint32_t bits = detail::get_u32(bytes, pos);
            float f;
            std::memcpy(&f, &bits, 4);
            x = static_cast<double>(f);
        }
        bank.kernels[i] = std::move(m);
    }
    return bank;
}

inline std::string bank_meta_csv(const KernelBank& bank) {
    std::string out = "index,L_m,phi_bar_deg\n";
    char line[96];
    for (size_t i = 0; i < bank.meta.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu,%.6g,%.6g\n", i, bank.meta[i].length_m,
                      bank.meta[i].orientation_deg);
        out += line;
    }
    return out;
}

inline void write_file_atomic(const std::string& path, const std::string& bytes) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + tmp);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("rename failed: " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void save_kernel_bank(const std::string& path, const KernelBank& bank,
                             const std::string& meta_path = "") {
    write_file_atomic(path, encode_kernel_bank(bank));
    if (!meta_path.empty()) write_file_atomic(meta_path, bank_meta_csv(bank));
}

inline KernelBank load_kernel_bank(const std::string& path) {
    return decode_kernel_bank(read_file(path));
}

}  // namespace osrk
