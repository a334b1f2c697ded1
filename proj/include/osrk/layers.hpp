#pragma once

// Layer set for the backbone: 2-D convolution (cross-correlation), max
// pooling, dense, ReLU. Each layer owns its parameters and per-sample
// caches; forward(x, train) retains what backward needs. backward(dout)
// accumulates parameter gradients and returns the input gradient.
//
// Convolutions run as im2col + accumulated row AXPYs so the inner loops
// stay contiguous. Everything is single-threaded and deterministic.

#include <algorithm>
#include <string>
#include <vector>

#include "osrk/tensor.hpp"

namespace osrk {

inline int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// ============================================================
// Conv2d
// ============================================================

struct Conv2d {
    Tensor weight;  // [C_out, C_in, k, k]
    Tensor bias;    // [C_out]
    int stride = 1;
    int pad = 0;
    bool frozen = false;       // skip weight/bias gradient accumulation
    bool first_layer = false;  // skip input gradient (nothing upstream)

    Conv2d() = default;
    Conv2d(int c_out, int c_in, int k, int s, int p)
        : weight({c_out, c_in, k, k}), bias({c_out}), stride(s), pad(p) {
        weight.requires_grad();
        bias.requires_grad();
    }

    int c_out() const { return weight.dim(0); }
    int c_in() const { return weight.dim(1); }
    int ksize() const { return weight.dim(2); }

    Tensor forward(const Tensor& x, bool train) {
        if (x.rank() != 3 || x.dim(0) != c_in())
            throw ShapeError("conv2d: input " + x.shape_str() + " does not match weight " +
                             weight.shape_str());
        const int h = x.dim(1), w = x.dim(2), k = ksize();
        if (k > h + 2 * pad || k > w + 2 * pad)
            throw ShapeError("conv2d: kernel " + std::to_string(k) + " exceeds padded input " +
                             x.shape_str());
        const int oh = conv_out_extent(h, k, stride, pad);
        const int ow = conv_out_extent(w, k, stride, pad);
        build_columns(x, oh, ow);
        if (train) input_shape_ = x.shape;

        Tensor out({c_out(), oh, ow});
        const int npix = oh * ow;
        const int patch = c_in() * k * k;
        for (int oc = 0; oc < c_out(); ++oc) {
            double* orow = out.v.data() + static_cast<size_t>(oc) * npix;
            std::fill(orow, orow + npix, bias.v[static_cast<size_t>(oc)]);
            const double* wrow = weight.v.data() + static_cast<size_t>(oc) * patch;
            for (int t = 0; t < patch; ++t) {
                const double wv = wrow[t];
                if (wv == 0.0) continue;
                const double* crow = cols_.data() + static_cast<size_t>(t) * npix;
                for (int p = 0; p < npix; ++p) orow[p] += wv * crow[p];
            }
        }
        return out;
    }

    Tensor backward(const Tensor& dout) {
        const int k = ksize();
        const int oh = dout.dim(1), ow = dout.dim(2);
        const int npix = oh * ow;
        const int patch = c_in() * k * k;
        if (!frozen) {
            for (int oc = 0; oc < c_out(); ++oc) {
                const double* drow = dout.v.data() + static_cast<size_t>(oc) * npix;
                double* gw = weight.g.data() + static_cast<size_t>(oc) * patch;
                for (int t = 0; t < patch; ++t) {
                    const double* crow = cols_.data() + static_cast<size_t>(t) * npix;
                    double acc = 0.0;
                    for (int p = 0; p < npix; ++p) acc += drow[p] * crow[p];
                    gw[t] += acc;
                }
                double acc = 0.0;
                for (int p = 0; p < npix; ++p) acc += drow[p];
                bias.g[static_cast<size_t>(oc)] += acc;
            }
        }
        if (first_layer) return Tensor{};

        // dcols = W^T * dout, then scatter back to the input lattice
        std::vector<double> dcols(static_cast<size_t>(patch) * npix, 0.0);
        for (int oc = 0; oc < c_out(); ++oc) {
            const double* drow = dout.v.data() + static_cast<size_t>(oc) * npix;
            const double* wrow = weight.v.data() + static_cast<size_t>(oc) * patch;
            for (int t = 0; t < patch; ++t) {
                const double wv = wrow[t];
                if (wv == 0.0) continue;
                double* crow = dcols.data() + static_cast<size_t>(t) * npix;
                for (int p = 0; p < npix; ++p) crow[p] += wv * drow[p];
            }
        }
        Tensor dx(input_shape_);
        const int h = input_shape_[1], w = input_shape_[2];
        for (int ic = 0; ic < c_in(); ++ic) {
            for (int kh = 0; kh < k; ++kh) {
                for (int kw = 0; kw < k; ++kw) {
                    const int t = (ic * k + kh) * k + kw;
                    const double* crow = dcols.data() + static_cast<size_t>(t) * npix;
                    for (int y = 0; y < oh; ++y) {
                        const int iy = y * stride + kh - pad;
                        if (iy < 0 || iy >= h) continue;
                        double* dxrow = dx.v.data() + (static_cast<size_t>(ic) * h + iy) * w;
                        const double* cr = crow + static_cast<size_t>(y) * ow;
                        for (int xo = 0; xo < ow; ++xo) {
                            const int ix = xo * stride + kw - pad;
                            if (ix >= 0 && ix < w) dxrow[ix] += cr[xo];
                        }
                    }
                }
            }
        }
        return dx;
    }

private:
    void build_columns(const Tensor& x, int oh, int ow) {
        const int k = ksize();
        const int h = x.dim(1), w = x.dim(2);
        const int npix = oh * ow;
        cols_.assign(static_cast<size_t>(c_in() * k * k) * npix, 0.0);
        for (int ic = 0; ic < c_in(); ++ic) {
            const double* xc = x.v.data() + static_cast<size_t>(ic) * h * w;
            for (int kh = 0; kh < k; ++kh) {
                for (int kw = 0; kw < k; ++kw) {
                    const int t = (ic * k + kh) * k + kw;
                    double* crow = cols_.data() + static_cast<size_t>(t) * npix;
                    for (int y = 0; y < oh; ++y) {
                        const int iy = y * stride + kh - pad;
                        if (iy < 0 || iy >= h) continue;
                        const double* xrow = xc + static_cast<size_t>(iy) * w;
                        double* cr = crow + static_cast<size_t>(y) * ow;
                        for (int xo = 0; xo < ow; ++xo) {
                            const int ix = xo * stride + kw - pad;
                            if (ix >= 0 && ix < w) cr[xo] = xrow[ix];
                        }
                    }
                }
            }
        }
    }

    std::vector<double> cols_;
    std::vector<int> input_shape_;
};

// ============================================================
// MaxPool2d
// ============================================================

struct MaxPool2d {
    int window = 2;
    int stride = 2;

    MaxPool2d() = default;
    MaxPool2d(int win, int s) : window(win), stride(s) {}

    Tensor forward(const Tensor& x, bool train) {
        if (x.rank() != 3)
            throw ShapeError("maxpool2d: expected [C,H,W], got " + x.shape_str());
        const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
        if (window > h || window > w)
            throw ShapeError("maxpool2d: window " + std::to_string(window) + " exceeds input " +
                             x.shape_str());
        const int oh = (h - window) / stride + 1;
        const int ow = (w - window) / stride + 1;
        Tensor out({c, oh, ow});
        if (train) {
            argmax_.assign(out.v.size(), 0);
            input_shape_ = x.shape;
        }
        for (int ch = 0; ch < c; ++ch) {
            const double* xc = x.v.data() + static_cast<size_t>(ch) * h * w;
            for (int y = 0; y < oh; ++y) {
                for (int xo = 0; xo < ow; ++xo) {
                    // first maximal element in scan order wins ties
                    int best = (y * stride) * w + xo * stride;
                    double bestv = xc[best];
                    for (int dy = 0; dy < window; ++dy) {
                        const int iy = y * stride + dy;
                        for (int dx = 0; dx < window; ++dx) {
                            const int idx = iy * w + xo * stride + dx;
                            if (xc[idx] > bestv) {
                                bestv = xc[idx];
                                best = idx;
                            }
                        }
                    }
                    const size_t o = (static_cast<size_t>(ch) * oh + y) * ow + xo;
                    out.v[o] = bestv;
                    if (train) argmax_[o] = best;
                }
            }
        }
        return out;
    }

    Tensor backward(const Tensor& dout) {
        Tensor dx(input_shape_);
        const int h = input_shape_[1], w = input_shape_[2];
        const size_t plane = static_cast<size_t>(h) * w;
        const size_t oplane = dout.v.size() / static_cast<size_t>(input_shape_[0]);
        for (int ch = 0; ch < input_shape_[0]; ++ch)
            for (size_t o = 0; o < oplane; ++o)
                dx.v[static_cast<size_t>(ch) * plane + argmax_[ch * oplane + o]] +=
                    dout.v[ch * oplane + o];
        return dx;
    }

private:
    std::vector<int> argmax_;
    std::vector<int> input_shape_;
};

// ============================================================
// Dense
// ============================================================

struct Dense {
    Tensor weight;  // [out, in]
    Tensor bias;    // [out]

    Dense() = default;
    Dense(int out, int in) : weight({out, in}), bias({out}) {
        weight.requires_grad();
        bias.requires_grad();
    }

    int out_dim() const { return weight.dim(0); }
    int in_dim() const { return weight.dim(1); }

    // accepts any input tensor and flattens it
    Tensor forward(const Tensor& x, bool train) {
        if (x.numel() != in_dim())
            throw ShapeError("dense: input " + x.shape_str() + " does not flatten to " +
                             std::to_string(in_dim()) + " (weight " + weight.shape_str() + ")");
        if (train) input_cache_ = x;
        Tensor out({out_dim()});
        const int n = in_dim();
        for (int o = 0; o < out_dim(); ++o) {
            const double* wrow = weight.v.data() + static_cast<size_t>(o) * n;
            double acc = bias.v[static_cast<size_t>(o)];
            for (int i = 0; i < n; ++i) acc += wrow[i] * x.v[static_cast<size_t>(i)];
            out.v[static_cast<size_t>(o)] = acc;
        }
        return out;
    }

    Tensor backward(const Tensor& dout) {
        const int n = in_dim();
        Tensor dx(input_cache_.shape);
        for (int o = 0; o < out_dim(); ++o) {
            const double d = dout.v[static_cast<size_t>(o)];
            bias.g[static_cast<size_t>(o)] += d;
            double* gw = weight.g.data() + static_cast<size_t>(o) * n;
            const double* wrow = weight.v.data() + static_cast<size_t>(o) * n;
            for (int i = 0; i < n; ++i) {
                gw[i] += d * input_cache_.v[static_cast<size_t>(i)];
                dx.v[static_cast<size_t>(i)] += d * wrow[i];
            }
        }
        return dx;
    }

private:
    Tensor input_cache_;
};

// ============================================================
// ReLU
// ============================================================

struct Relu {
    Tensor forward(const Tensor& x, bool train) {
        Tensor out(x.shape);
        if (train) mask_.assign(x.v.size(), 0);
        for (size_t i = 0; i < x.v.size(); ++i) {
            if (x.v[i] > 0.0) {
                out.v[i] = x.v[i];
                if (train) mask_[i] = 1;
            }
        }
        return out;
    }

    Tensor backward(const Tensor& dout) {
        Tensor dx(dout.shape);
        for (size_t i = 0; i < dout.v.size(); ++i)
            if (mask_[i]) dx.v[i] = dout.v[i];
        return dx;
    }

private:
    std::vector<char> mask_;
};

}  // namespace osrk
