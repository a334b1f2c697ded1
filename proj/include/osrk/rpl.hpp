#pragma once

// Reciprocal-point open-set head. Each known class k owns a learnable
// point P^k acting as an inverse prototype: training pushes class-k
// features AWAY from P^k under the combined distance, so proximity to
// the predicted class's point signals "unknown" at inference. A learnable
// radius R bounds the mean squared distance of known samples.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "osrk/rng.hpp"
#include "osrk/tensor.hpp"

namespace osrk {

inline constexpr int kUnknown = -1;

struct RplHead {
    Tensor points;  // [N, m]
    Tensor radius;  // [1], clamped >= 0 after every update
    double gamma = 1.0;   // softmax temperature
    double lambda = 0.1;  // boundary-loss weight

    RplHead() = default;
    RplHead(int n_classes, int dim, uint64_t seed, double gamma_ = 1.0, double lambda_ = 0.1)
        : points({n_classes, dim}), radius({1}), gamma(gamma_), lambda(lambda_) {
        if (n_classes < 2) throw ConfigError("RplHead: need at least 2 known classes");
        if (dim < 2) throw ConfigError("RplHead: embedding dim must be >= 2");
        if (gamma <= 0) throw ConfigError("RplHead: gamma must be positive");
        if (lambda < 0) throw ConfigError("RplHead: lambda must be >= 0");
        Rng rng(mix_seed(seed, 0x72706c68));
        for (auto& x : points.v) x = rng.normal(0.0, 0.1);
        radius.v[0] = 1.0;
        points.requires_grad();
        radius.requires_grad();
    }

    int n_classes() const { return points.dim(0); }
    int dim() const { return points.dim(1); }

    const double* point(int k) const { return points.v.data() + static_cast<size_t>(k) * dim(); }

    void clamp_radius() { radius.v[0] = std::max(0.0, radius.v[0]); }
};

// ============================================================
// Distances
// ============================================================

inline void check_same_length(size_t a, size_t b, const char* what) {
    if (a != b)
        throw ShapeError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " +
                         std::to_string(b));
}

// mean squared coordinate difference: (1/m) * sum_j (f_j - p_j)^2
inline double dist_euclid(std::span<const double> feature, std::span<const double> point) {
    check_same_length(feature.size(), point.size(), "dist_euclid");
    double acc = 0.0;
    for (size_t j = 0; j < feature.size(); ++j) {
        double d = feature[j] - point[j];
        acc += d * d;
    }
    return acc / static_cast<double>(feature.size());
}

inline double dist_dot(std::span<const double> feature, std::span<const double> point) {
    check_same_length(feature.size(), point.size(), "dist_dot");
    double acc = 0.0;
    for (size_t j = 0; j < feature.size(); ++j) acc += feature[j] * point[j];
    return acc;
}

// combined metric: euclidean minus dot; may be negative
inline double dist_combined(std::span<const double> feature, std::span<const double> point) {
    return dist_euclid(feature, point) - dist_dot(feature, point);
}

inline std::vector<double> all_combined_distances(std::span<const double> feature,
                                                  const RplHead& head) {
    std::vector<double> d(static_cast<size_t>(head.n_classes()));
    for (int k = 0; k < head.n_classes(); ++k)
        d[static_cast<size_t>(k)] =
            dist_combined(feature, {head.point(k), static_cast<size_t>(head.dim())});
    return d;
}

// ============================================================
// Probability model
// ============================================================

// softmax over gamma * combined distance, max-subtracted for stability
inline std::vector<double> class_probabilities(std::span<const double> feature, const RplHead& head) {
    for (double x : feature)
        if (!std::isfinite(x)) throw NumericalError("class_probabilities: non-finite feature");
    std::vector<double> z = all_combined_distances(feature, head);
    double zmax = -1e300;
    for (double& x : z) {
        x *= head.gamma;
        zmax = std::max(zmax, x);
    }
    double denom = 0.0;
    for (double& x : z) {
        x = std::exp(x - zmax);
        denom += x;
    }
    for (double& x : z) x /= denom;
    return z;
}

// ============================================================
// Losses
// ============================================================
// Batch losses return the scalar and accumulate gradients into
// grad_features (same shape as features), head.points.g and head.radius.g.
// Gradients are means over the batch.

struct LossValue {
    double classification = 0.0;
    double boundary = 0.0;
    double total = 0.0;
};

// mean over batch of -log p(y=label | feature)
inline double loss_classification(const Tensor& features, const std::vector<int>& labels,
                                  RplHead& head, Tensor* grad_features) {
    const int b = features.dim(0);
    const int m = features.dim(1);
    if (m != head.dim())
        throw ShapeError("loss_classification: feature dim " + std::to_string(m) + " vs head dim " +
                         std::to_string(head.dim()));
    if (static_cast<int>(labels.size()) != b)
        throw ArgumentError("loss_classification: labels size does not match batch");
    const double inv_b = 1.0 / b;
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= head.n_classes())
            throw ArgumentError("loss_classification: label " + std::to_string(y) +
                                " outside [0," + std::to_string(head.n_classes()) + ")");
        std::span<const double> f{features.v.data() + static_cast<size_t>(i) * m,
                                  static_cast<size_t>(m)};
        std::vector<double> p = class_probabilities(f, head);
        loss += -std::log(std::max(p[static_cast<size_t>(y)], 1e-300));
        if (!grad_features) continue;
        // dL/dz_k = (p_k - [k==y]) / B with z_k = gamma * d_k
        for (int k = 0; k < head.n_classes(); ++k) {
            double dz = (p[static_cast<size_t>(k)] - (k == y ? 1.0 : 0.0)) * inv_b * head.gamma;
            const double* pk = head.point(k);
            double* gf = grad_features->v.data() + static_cast<size_t>(i) * m;
            double* gp = head.points.g.data() + static_cast<size_t>(k) * m;
            for (int j = 0; j < m; ++j) {
                const double fj = f[static_cast<size_t>(j)];
                const double pj = pk[j];
                // d_k = (1/m)||f-P||^2 - f.P
                gf[j] += dz * ((2.0 / m) * (fj - pj) - pj);
                gp[j] += dz * ((2.0 / m) * (pj - fj) - fj);
            }
        }
    }
    return loss * inv_b;
}

// mean over batch of max(d_e(f, P^label) - R, 0); subgradient 0 at the kink
inline double loss_boundary(const Tensor& features, const std::vector<int>& labels, RplHead& head,
                            Tensor* grad_features) {
    const int b = features.dim(0);
    const int m = features.dim(1);
    if (static_cast<int>(labels.size()) != b)
        throw ArgumentError("loss_boundary: labels size does not match batch");
    const double inv_b = 1.0 / b;
    const double r = head.radius.v[0];
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= head.n_classes())
            throw ArgumentError("loss_boundary: label " + std::to_string(y) + " outside [0," +
                                std::to_string(head.n_classes()) + ")");
        std::span<const double> f{features.v.data() + static_cast<size_t>(i) * m,
                                  static_cast<size_t>(m)};
        const double de = dist_euclid(f, {head.point(y), static_cast<size_t>(m)});
        const double margin = de - r;
        if (margin <= 0.0) continue;
        loss += margin;
        if (!grad_features) continue;
        head.radius.g[0] -= inv_b;
        const double* py = head.point(y);
        double* gf = grad_features->v.data() + static_cast<size_t>(i) * m;
        double* gp = head.points.g.data() + static_cast<size_t>(y) * m;
        for (int j = 0; j < m; ++j) {
            const double diff = f[static_cast<size_t>(j)] - py[j];
            gf[j] += inv_b * (2.0 / m) * diff;
            gp[j] -= inv_b * (2.0 / m) * diff;
        }
    }
    return loss * inv_b;
}

// total = classification + lambda * boundary
inline LossValue loss_total(const Tensor& features, const std::vector<int>& labels, RplHead& head,
                            Tensor* grad_features) {
    LossValue out;
    out.classification = loss_classification(features, labels, head, grad_features);
    if (head.lambda != 0.0) {
        Tensor bgrad;
        Tensor* bptr = nullptr;
        if (grad_features) {
            bgrad = Tensor(features.shape);
            bptr = &bgrad;
        }
        // boundary gradients land scaled by lambda
        double saved_rg = head.radius.g.empty() ? 0.0 : head.radius.g[0];
        std::vector<double> pg_before = head.points.g;
        out.boundary = loss_boundary(features, labels, head, bptr);
        if (grad_features) {
            for (size_t i = 0; i < head.points.g.size(); ++i)
                head.points.g[i] = pg_before[i] + head.lambda * (head.points.g[i] - pg_before[i]);
            head.radius.g[0] = saved_rg + head.lambda * (head.radius.g[0] - saved_rg);
            for (size_t i = 0; i < grad_features->v.size(); ++i)
                grad_features->v[i] += head.lambda * bgrad.v[i];
        }
    } else {
        out.boundary = loss_boundary(features, labels, head, nullptr);
    }
    out.total = out.classification + head.lambda * out.boundary;
    return out;
}

// ============================================================
// Open-set decision
// ============================================================

enum class GateMode { euclid, combined };

// sentinel threshold meaning "use the learned radius"
inline constexpr double kUseLearnedRadius = std::numeric_limits<double>::quiet_NaN();

struct OpenPrediction {
    int class_index = kUnknown;  // kUnknown or [0, N)
    std::vector<double> distances;  // combined distance per class
    double gating_distance = 0.0;
    double threshold_used = 0.0;
};

// Class choice: argmax of the combined distance (lowest index wins ties).
// Rejection: gating distance strictly below the threshold means the
// feature sits too close to the winner's reciprocal point -> unknown.
inline OpenPrediction predict_open(std::span<const double> feature, const RplHead& head,
                                   GateMode gate = GateMode::euclid,
                                   double threshold = kUseLearnedRadius) {
    OpenPrediction out;
    out.distances = all_combined_distances(feature, head);
    int best = 0;
    for (int k = 1; k < head.n_classes(); ++k)
        if (out.distances[static_cast<size_t>(k)] > out.distances[static_cast<size_t>(best)])
            best = k;
    const std::span<const double> pbest{head.point(best), static_cast<size_t>(head.dim())};
    out.gating_distance = gate == GateMode::euclid ? dist_euclid(feature, pbest)
                                                   : out.distances[static_cast<size_t>(best)];
    out.threshold_used = std::isnan(threshold) ? head.radius.v[0] : threshold;
    out.class_index = out.gating_distance < out.threshold_used ? kUnknown : best;
    return out;
}

// q-th percentile (nearest-rank) of training gating distances; a
// calibration alternative to gating on the learned radius directly.
inline double calibrate_threshold(std::vector<double> gating_distances, double percentile = 5.0) {
    if (gating_distances.empty()) throw ArgumentError("calibrate_threshold: no distances");
    if (percentile < 0 || percentile > 100)
        throw ArgumentError("calibrate_threshold: percentile outside [0,100]");
    std::sort(gating_distances.begin(), gating_distances.end());
    size_t n = gating_distances.size();
    size_t rank = static_cast<size_t>(std::ceil(percentile / 100.0 * static_cast<double>(n)));
    if (rank > 0) --rank;
    return gating_distances[std::min(rank, n - 1)];
}

}  // namespace osrk
