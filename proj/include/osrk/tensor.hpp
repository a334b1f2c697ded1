#pragma once

// Dense double-precision tensor with an optional gradient buffer.
// Row-major storage; shapes are small (rank <= 4).

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "osrk/common.hpp"

namespace osrk {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;
    std::vector<double> g;  // empty until requires_grad() is called

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(numel_of(shape)), 0.0);
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    void requires_grad() {
        if (g.size() != v.size()) g.assign(v.size(), 0.0);
    }
    bool has_grad() const { return g.size() == v.size(); }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

    void check_finite(const std::string& context) const {
        for (double x : v)
            if (!std::isfinite(x))
                throw NumericalError("non-finite value in " + context);
    }
};

}  // namespace osrk
