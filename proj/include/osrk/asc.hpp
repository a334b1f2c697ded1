#pragma once

// Attributed-scattering-center response synthesis. A scatterer is the
// 7-parameter tuple (A, alpha, x, y, L, phi_bar, gamma); scenes are
// superpositions of scatterer responses over a frequency-aspect grid,
// imaged by a unitary 2-D DFT with the zero-frequency bin recentered.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "osrk/common.hpp"
#include "osrk/fft.hpp"
#include "osrk/kv_config.hpp"
#include "osrk/rng.hpp"

namespace osrk {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegToRad = kPi / 180.0;

// normalized sinc: sin(pi x)/(pi x), sinc(0) = 1
inline double sinc(double x) {
    if (x == 0.0) return 1.0;
    double px = kPi * x;
    return std::sin(px) / px;
}

// ============================================================
// Radar grid
// ============================================================

struct RadarParams {
    double carrier_freq_hz = 9.6e9;
    double bandwidth_hz = 0.49e9;
    double freq_min_hz = 9.36e9;
    double freq_max_hz = 9.85e9;
    int n_freq_samples = 189;
    int zero_pad_each_end = 19;
    double aspect_span_deg = 2.8;
    int n_aspect_samples = 227;
    double light_speed = 299792458.0;
    double spatial_resolution_m = 0.3;

    int padded_rows() const { return n_freq_samples + 2 * zero_pad_each_end; }

    void validate() const {
        if (n_freq_samples < 1) throw ConfigError("RadarParams.n_freq_samples: must be >= 1");
        if (zero_pad_each_end < 0) throw ConfigError("RadarParams.zero_pad_each_end: must be >= 0");
        if (n_aspect_samples < 1) throw ConfigError("RadarParams.n_aspect_samples: must be >= 1");
        if (spatial_resolution_m <= 0) throw ConfigError("RadarParams.spatial_resolution_m: must be > 0");
        if (light_speed <= 0) throw ConfigError("RadarParams.light_speed: must be > 0");
        if (aspect_span_deg <= 0) throw ConfigError("RadarParams.aspect_span_deg: must be > 0");
        if (!(freq_min_hz < carrier_freq_hz && carrier_freq_hz < freq_max_hz))
            throw ConfigError("RadarParams.carrier_freq_hz: must lie strictly inside [freq_min_hz, freq_max_hz]");
        double span = freq_max_hz - freq_min_hz;
        if (std::abs(span - bandwidth_hz) > 1e-6 * bandwidth_hz)
            throw ConfigError("RadarParams.bandwidth_hz: freq_max_hz - freq_min_hz must equal bandwidth_hz");
        if (padded_rows() != n_aspect_samples)
            throw ConfigError("RadarParams.n_aspect_samples: n_freq_samples + 2*zero_pad_each_end must equal n_aspect_samples");
    }

    // MSTAR-style defaults: 189 frequency samples padded 19+19 to a square
    // 227x227 grid, 2.8 degree aspect span, 0.3 m pixels.
    static RadarParams mstar_profile() { return RadarParams{}; }

    KvConfig to_kv() const {
        KvConfig kv;
        char buf[40];
        auto put = [&](const char* k, double v) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            kv.set(k, buf);
        };
        put("carrier_freq_hz", carrier_freq_hz);
        put("bandwidth_hz", bandwidth_hz);
        put("freq_min_hz", freq_min_hz);
        put("freq_max_hz", freq_max_hz);
        kv.set("n_freq_samples", std::to_string(n_freq_samples));
        kv.set("zero_pad_each_end", std::to_string(zero_pad_each_end));
        put("aspect_span_deg", aspect_span_deg);
        kv.set("n_aspect_samples", std::to_string(n_aspect_samples));
        put("light_speed", light_speed);
        put("spatial_resolution_m", spatial_resolution_m);
        return kv;
    }

    static RadarParams from_kv(const KvConfig& kv) {
        RadarParams p;
        p.carrier_freq_hz = kv.get_double_or("carrier_freq_hz", p.carrier_freq_hz);
        p.bandwidth_hz = kv.get_double_or("bandwidth_hz", p.bandwidth_hz);
        p.freq_min_hz = kv.get_double_or("freq_min_hz", p.freq_min_hz);
        p.freq_max_hz = kv.get_double_or("freq_max_hz", p.freq_max_hz);
        p.n_freq_samples = static_cast<int>(kv.get_int_or("n_freq_samples", p.n_freq_samples));
        p.zero_pad_each_end = static_cast<int>(kv.get_int_or("zero_pad_each_end", p.zero_pad_each_end));
        p.aspect_span_deg = kv.get_double_or("aspect_span_deg", p.aspect_span_deg);
        p.n_aspect_samples = static_cast<int>(kv.get_int_or("n_aspect_samples", p.n_aspect_samples));
        p.light_speed = kv.get_double_or("light_speed", p.light_speed);
        p.spatial_resolution_m = kv.get_double_or("spatial_resolution_m", p.spatial_resolution_m);
        p.validate();
        return p;
    }

    // Small square grid whose image pixel spacing equals `resolution_m` in
    // both axes; used for desk-scale synthetic datasets.
    static RadarParams desk_profile(int grid = 64, int pad = 6, double resolution_m = 0.3,
                                    double carrier_hz = 9.6e9, double c = 299792458.0) {
        RadarParams p;
        p.light_speed = c;
        p.carrier_freq_hz = carrier_hz;
        p.spatial_resolution_m = resolution_m;
        p.n_aspect_samples = grid;
        p.zero_pad_each_end = pad;
        p.n_freq_samples = grid - 2 * pad;
        double freq_step = c / (2.0 * grid * resolution_m);
        p.bandwidth_hz = freq_step * (p.n_freq_samples - 1);
        p.freq_min_hz = carrier_hz - p.bandwidth_hz / 2.0;
        p.freq_max_hz = carrier_hz + p.bandwidth_hz / 2.0;
        double aspect_step_rad = c / (2.0 * carrier_hz * grid * resolution_m);
        p.aspect_span_deg = aspect_step_rad * (grid - 1) / kDegToRad;
        return p;
    }
};

// Frequency axis (Hz) with masked zero-pad slots at each end, aspect axis
// in degrees. Rows of every spectral matrix follow the frequency axis,
// columns the aspect axis. Carries the propagation speed and carrier so
// responses can be evaluated from the grid alone.
struct FrequencyAspectGrid {
    std::vector<double> freq_hz;
    std::vector<bool> freq_masked;
    std::vector<double> aspect_deg;
    double light_speed = 299792458.0;
    double carrier_freq_hz = 9.6e9;

    int rows() const { return static_cast<int>(freq_hz.size()); }
    int cols() const { return static_cast<int>(aspect_deg.size()); }
};

inline FrequencyAspectGrid make_radar_grid(const RadarParams& p) {
    p.validate();
    FrequencyAspectGrid g;
    g.light_speed = p.light_speed;
    g.carrier_freq_hz = p.carrier_freq_hz;
    int total = p.padded_rows();
    g.freq_hz.resize(total);
    g.freq_masked.assign(total, false);
    double fstep = p.n_freq_samples > 1
                       ? (p.freq_max_hz - p.freq_min_hz) / (p.n_freq_samples - 1)
                       : 0.0;
    for (int i = 0; i < total; ++i) {
        int k = i - p.zero_pad_each_end;
        g.freq_hz[i] = p.freq_min_hz + k * fstep;
        g.freq_masked[i] = (k < 0 || k >= p.n_freq_samples);
    }
    g.aspect_deg.resize(p.n_aspect_samples);
    double astep = p.n_aspect_samples > 1 ? p.aspect_span_deg / (p.n_aspect_samples - 1) : 0.0;
    for (int j = 0; j < p.n_aspect_samples; ++j)
        g.aspect_deg[j] = -p.aspect_span_deg / 2.0 + j * astep;
    return g;
}

// ============================================================
// Scattering centers
// ============================================================

struct ScatteringCenter {
    double amplitude = 1.0;        // A, dimensionless
    double freq_dependence = 0.0;  // alpha
    double x_m = 0.0;
    double y_m = 0.0;
    double length_m = 0.0;         // L
    double orientation_deg = 0.0;  // phi_bar
    double aspect_dependence = 0.0;  // gamma

    void validate() const {
        if (amplitude < 0) throw ConfigError("ScatteringCenter.amplitude: must be >= 0");
        if (length_m < 0) throw ConfigError("ScatteringCenter.length_m: must be >= 0");
    }
};

enum class ResponseMode { full, simplified };

// Scatterer length expressible on the kernel pixel lattice: L = p * resolution.
inline double length_from_pixels(int p, double resolution_m, int kernel_size) {
    if (p < 1 || p > kernel_size)
        throw ConfigError("length_from_pixels: p must satisfy 1 <= p <= kernel size (" +
                          std::to_string(p) + " vs " + std::to_string(kernel_size) + ")");
    return p * resolution_m;
}

// Single-scatterer response over the grid. Masked (zero-pad) slots are
// exactly zero. Simplified mode keeps only the sinc aspect envelope:
// unit amplitude, scatterer at the scene origin.
inline ComplexMatrix asc_response(const ScatteringCenter& sc, const FrequencyAspectGrid& grid,
                                  ResponseMode mode) {
    sc.validate();
    ComplexMatrix out(grid.rows(), grid.cols());
    const double phi_bar_rad = sc.orientation_deg * kDegToRad;
    for (int j = 0; j < grid.cols(); ++j) {
        const double phi_rad = grid.aspect_deg[j] * kDegToRad;
        const double sin_phi = std::sin(phi_rad);
        const double cos_phi = std::cos(phi_rad);
        const double sin_delta = std::sin(phi_rad - phi_bar_rad);
        for (int i = 0; i < grid.rows(); ++i) {
            if (grid.freq_masked[i]) continue;
            const double f = grid.freq_hz[i];
            const double envelope = sinc(2.0 * (f / grid.light_speed) * sc.length_m * sin_delta);
            if (mode == ResponseMode::simplified) {
                out(i, j) = cdouble(envelope, 0.0);
                continue;
            }
            // (j f/fc)^alpha = (f/fc)^alpha * exp(i pi alpha / 2)
            cdouble val(envelope, 0.0);
            val *= sc.amplitude;
            if (sc.freq_dependence != 0.0) {
                double mag = std::pow(f / grid.carrier_freq_hz, sc.freq_dependence);
                double ang = kPi * sc.freq_dependence / 2.0;
                val *= cdouble(mag * std::cos(ang), mag * std::sin(ang));
            }
            double phase = -4.0 * kPi * (f / grid.light_speed) * (sc.x_m * cos_phi + sc.y_m * sin_phi);
            if (phase != 0.0) val *= cdouble(std::cos(phase), std::sin(phase));
            if (sc.aspect_dependence != 0.0)
                val *= std::exp(-2.0 * kPi * f * sc.aspect_dependence * sin_phi);
            out(i, j) = val;
        }
    }
    return out;
}

// Superposition of full-mode responses plus optional circular complex
// Gaussian noise per unmasked slot. noise_sigma = 0 is deterministic.
inline ComplexMatrix scene_spectrum(const std::vector<ScatteringCenter>& centers,
                                    const FrequencyAspectGrid& grid, double noise_sigma, Rng& rng) {
    if (centers.empty()) throw ArgumentError("scene_spectrum: center list must be non-empty");
    if (noise_sigma < 0) throw ArgumentError("scene_spectrum: noise_sigma must be >= 0");
    ComplexMatrix sum(grid.rows(), grid.cols());
    for (const auto& sc : centers) {
        ComplexMatrix one = asc_response(sc, grid, ResponseMode::full);
        for (size_t k = 0; k < sum.v.size(); ++k) sum.v[k] += one.v[k];
    }
    if (noise_sigma > 0) {
        for (int i = 0; i < grid.rows(); ++i) {
            for (int j = 0; j < grid.cols(); ++j) {
                if (grid.freq_masked[i]) continue;
                sum(i, j) += cdouble(rng.normal(0.0, noise_sigma), rng.normal(0.0, noise_sigma));
            }
        }
    }
    return sum;
}

// Unitary 2-D DFT, recentered, element-wise magnitude.
inline RealMatrix spectrum_to_image(const ComplexMatrix& spectrum) {
    if (!spectrum.square())
        throw ShapeError("spectrum_to_image: matrix must be square, got " +
                         std::to_string(spectrum.rows) + "x" + std::to_string(spectrum.cols));
    ComplexMatrix img = fftshift2(fft2_unitary(spectrum));
    RealMatrix mag(img.rows, img.cols);
    for (size_t k = 0; k < img.v.size(); ++k) mag.v[k] = std::abs(img.v[k]);
    return mag;
}

// r x r window about the image center pixel; odd r. For even image sides
// the center is the upper-left pixel of the central 2x2.
inline RealMatrix crop_center(const RealMatrix& image, int r) {
    if (r % 2 == 0) throw ShapeError("crop_center: window size must be odd, got " + std::to_string(r));
    if (r > image.rows || r > image.cols)
        throw ShapeError("crop_center: window " + std::to_string(r) + " exceeds image " +
                         std::to_string(image.rows) + "x" + std::to_string(image.cols));
    int cr = (image.rows - 1) / 2;
    int cc = (image.cols - 1) / 2;
    int h = (r - 1) / 2;
    RealMatrix out(r, r);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) out(i, j) = image(cr - h + i, cc - h + j);
    return out;
}

}  // namespace osrk
