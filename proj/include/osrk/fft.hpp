#pragma once

// Complex FFT for arbitrary lengths: iterative radix-2 for powers of two,
// Bluestein's chirp-z for everything else (the default spectral grid is
// 227 points, which is prime). 2-D transform is unitary with the
// zero-frequency bin recentered, so Parseval holds exactly up to rounding.

#include <complex>
#include <vector>

#include "osrk/common.hpp"

namespace osrk {

using cdouble = std::complex<double>;

namespace detail {

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// in-place radix-2, size must be a power of two; sign = -1 forward, +1 inverse (unscaled)
inline void fft_pow2(std::vector<cdouble>& a, int sign, const std::vector<cdouble>& twiddle) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        size_t step = n / len;
        for (size_t i = 0; i < n; i += len) {
            for (size_t k = 0; k < len / 2; ++k) {
                cdouble w = twiddle[k * step];
                if (sign > 0) w = std::conj(w);
                cdouble u = a[i + k];
                cdouble t = a[i + k + len / 2] * w;
                a[i + k] = u + t;
                a[i + k + len / 2] = u - t;
            }
        }
    }
}

}  // namespace detail

// One-dimensional DFT plan for a fixed length. Forward is the plain
// unscaled sum; inverse includes the 1/n factor.
class DftPlan {
public:
    explicit DftPlan(size_t n) : n_(n) {
        if (n_ == 0) throw ShapeError("DftPlan: length must be positive");
        if (detail::is_pow2(n_)) {
            make_twiddles(n_, twiddle_);
        } else {
            m_ = detail::next_pow2(2 * n_ - 1);
            make_twiddles(m_, twiddle_);
            chirp_.resize(n_);
            // exp(-i*pi*k^2/n), k^2 taken mod 2n to keep the angle small
            for (size_t k = 0; k < n_; ++k) {
                size_t k2 = (k * k) % (2 * n_);
                double ang = -3.14159265358979323846 * static_cast<double>(k2) / static_cast<double>(n_);
                chirp_[k] = cdouble(std::cos(ang), std::sin(ang));
            }
            bfft_.assign(m_, cdouble(0, 0));
            bfft_[0] = std::conj(chirp_[0]);
            for (size_t k = 1; k < n_; ++k) {
                bfft_[k] = std::conj(chirp_[k]);
                bfft_[m_ - k] = std::conj(chirp_[k]);
            }
            detail::fft_pow2(bfft_, -1, twiddle_);
        }
    }

    size_t length() const { return n_; }

    void forward(std::vector<cdouble>& data) const { run(data, -1); }

    void inverse(std::vector<cdouble>& data) const {
        run(data, +1);
        double inv = 1.0 / static_cast<double>(n_);
        for (auto& x : data) x *= inv;
    }

private:
    static void make_twiddles(size_t n, std::vector<cdouble>& tw) {
        tw.resize(n / 2);
        for (size_t k = 0; k < n / 2; ++k) {
            double ang = -2.0 * 3.14159265358979323846 * static_cast<double>(k) / static_cast<double>(n);
            tw[k] = cdouble(std::cos(ang), std::sin(ang));
        }
    }

    void run(std::vector<cdouble>& data, int sign) const {
        if (data.size() != n_) throw ShapeError("DftPlan: data length does not match plan");
        if (chirp_.empty()) {
            detail::fft_pow2(data, sign, twiddle_);
            return;
        }
        // Bluestein: x_k w_k convolved with conj(w), then scaled by w_k.
        // Inverse reuses the forward machinery via conjugation.
        if (sign > 0)
            for (auto& x : data) x = std::conj(x);
        std::vector<cdouble> a(m_, cdouble(0, 0));
        for (size_t k = 0; k < n_; ++k) a[k] = data[k] * chirp_[k];
        detail::fft_pow2(a, -1, twiddle_);
        for (size_t k = 0; k < m_; ++k) a[k] *= bfft_[k];
        detail::fft_pow2(a, +1, twiddle_);
        double invm = 1.0 / static_cast<double>(m_);
        for (size_t k = 0; k < n_; ++k) data[k] = a[k] * invm * chirp_[k];
        if (sign > 0)
            for (auto& x : data) x = std::conj(x);
    }

    size_t n_ = 0;
    size_t m_ = 0;                  // Bluestein working size, 0 when radix-2
    std::vector<cdouble> twiddle_;  // for size n_ (pow2) or m_
    std::vector<cdouble> chirp_;
    std::vector<cdouble> bfft_;     // FFT of the chirp kernel
};

// Unitary 2-D DFT: rows then columns, scaled by 1/sqrt(rows*cols).
inline ComplexMatrix fft2_unitary(const ComplexMatrix& in) {
    ComplexMatrix out = in;
    DftPlan row_plan(static_cast<size_t>(in.cols));
    std::vector<cdouble> buf(static_cast<size_t>(in.cols));
    for (int r = 0; r < in.rows; ++r) {
        for (int c = 0; c < in.cols; ++c) buf[c] = out(r, c);
        row_plan.forward(buf);
        for (int c = 0; c < in.cols; ++c) out(r, c) = buf[c];
    }
    DftPlan col_plan(static_cast<size_t>(in.rows));
    std::vector<cdouble> cbuf(static_cast<size_t>(in.rows));
    for (int c = 0; c < in.cols; ++c) {
        for (int r = 0; r < in.rows; ++r) cbuf[r] = out(r, c);
        col_plan.forward(cbuf);
        for (int r = 0; r < in.rows; ++r) out(r, c) = cbuf[r];
    }
    double scale = 1.0 / std::sqrt(static_cast<double>(in.rows) * static_cast<double>(in.cols));
    for (auto& x : out.v) x *= scale;
    return out;
}

// Moves the zero-frequency bin to index floor(n/2) along both axes.
inline ComplexMatrix fftshift2(const ComplexMatrix& in) {
    ComplexMatrix out(in.rows, in.cols);
    int r0 = in.rows / 2;
    int c0 = in.cols / 2;
    for (int r = 0; r < in.rows; ++r)
        for (int c = 0; c < in.cols; ++c)
            out((r + r0) % in.rows, (c + c0) % in.cols) = in(r, c);
    return out;
}

}  // namespace osrk
