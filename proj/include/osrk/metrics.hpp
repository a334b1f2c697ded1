#pragma once

// Open-set evaluation: confusion assembly with unknown-rejection counts,
// macro recall/precision/F1, open-set accuracy and the openness measure.
//
// Accounting convention (the cross cases): a known-truth sample rejected
// as unknown counts FN of its true class plus FU; an unknown-truth sample
// accepted as class j counts FP of j (and is not TU). TU counts correctly
// rejected unknowns only. TN_i counts samples neither of class i nor
// predicted as i.

#include <cmath>
#include <string>
#include <vector>

#include "osrk/common.hpp"
#include "osrk/rpl.hpp"

namespace osrk {

struct OpenSetConfusion {
    int n_classes = 0;
    std::vector<long> tp, fp, fn, tn;
    long tu = 0;  // unknown correctly rejected
    long fu = 0;  // known incorrectly rejected

    explicit OpenSetConfusion(int n = 0)
        : n_classes(n), tp(static_cast<size_t>(n), 0), fp(static_cast<size_t>(n), 0),
          fn(static_cast<size_t>(n), 0), tn(static_cast<size_t>(n), 0) {}
};

// predictions/truths: class index in [0,N) or kUnknown
inline OpenSetConfusion assemble_confusion(const std::vector<int>& predictions,
                                           const std::vector<int>& truths, int n_classes) {
    if (predictions.size() != truths.size())
        throw ArgumentError("assemble_confusion: " + std::to_string(predictions.size()) +
                            " predictions vs " + std::to_string(truths.size()) + " truths");
    OpenSetConfusion c(n_classes);
    const long n = static_cast<long>(predictions.size());
    for (size_t i = 0; i < predictions.size(); ++i) {
        const int pred = predictions[i];
        const int truth = truths[i];
        if (pred != kUnknown && (pred < 0 || pred >= n_classes))
            throw ArgumentError("assemble_confusion: prediction " + std::to_string(pred) +
                                " outside [0," + std::to_string(n_classes) + ")");
        if (truth != kUnknown && (truth < 0 || truth >= n_classes))
            throw ArgumentError("assemble_confusion: truth " + std::to_string(truth) +
                                " outside [0," + std::to_string(n_classes) + ")");
        if (truth != kUnknown) {
            if (pred == truth) {
                c.tp[static_cast<size_t>(truth)]++;
            } else if (pred == kUnknown) {
                c.fn[static_cast<size_t>(truth)]++;
                c.fu++;
            } else {
                c.fn[static_cast<size_t>(truth)]++;
                c.fp[static_cast<size_t>(pred)]++;
            }
        } else {
            if (pred == kUnknown) {
                c.tu++;
            } else {
                c.fp[static_cast<size_t>(pred)]++;
            }
        }
    }
    // TN_i = samples with truth != i and prediction != i
    for (int k = 0; k < n_classes; ++k) {
        long truth_k = 0, pred_k = 0, both = 0;
        for (size_t i = 0; i < predictions.size(); ++i) {
            if (truths[i] == k) truth_k++;
            if (predictions[i] == k) pred_k++;
            if (truths[i] == k && predictions[i] == k) both++;
        }
        c.tn[static_cast<size_t>(k)] = n - truth_k - pred_k + both;
    }
    return c;
}

struct MacroMetrics {
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
};

// Per-class rates macro-averaged over known classes; zero-denominator
// classes contribute 0.
inline MacroMetrics macro_metrics(const OpenSetConfusion& c) {
    if (c.n_classes < 1) throw ArgumentError("macro_metrics: no known classes");
    MacroMetrics m;
    for (int k = 0; k < c.n_classes; ++k) {
        const double tp = static_cast<double>(c.tp[static_cast<size_t>(k)]);
        const double fn = static_cast<double>(c.fn[static_cast<size_t>(k)]);
        const double fp = static_cast<double>(c.fp[static_cast<size_t>(k)]);
        const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        m.recall += recall;
        m.precision += precision;
        m.f1 += f1;
    }
    m.recall /= c.n_classes;
    m.precision /= c.n_classes;
    m.f1 /= c.n_classes;
    return m;
}

// (sum_i (TP_i + TN_i) + TU) / (sum_i (TP_i + TN_i + FP_i + FN_i) + FU + TU)
inline double openset_accuracy(const OpenSetConfusion& c) {
    double num = static_cast<double>(c.tu);
    double den = static_cast<double>(c.fu + c.tu);
    for (int k = 0; k < c.n_classes; ++k) {
        num += static_cast<double>(c.tp[static_cast<size_t>(k)] + c.tn[static_cast<size_t>(k)]);
        den += static_cast<double>(c.tp[static_cast<size_t>(k)] + c.tn[static_cast<size_t>(k)] +
                                   c.fp[static_cast<size_t>(k)] + c.fn[static_cast<size_t>(k)]);
    }
    if (den == 0.0) throw ArgumentError("openset_accuracy: empty confusion");
    return num / den;
}

// 1 - sqrt(2*train / (train + test)); 0 for the closed set.
inline double openness(int n_train_classes, int n_test_classes) {
    if (n_train_classes < 2)
        throw ArgumentError("openness: need at least 2 training classes");
    if (n_train_classes > n_test_classes)
        throw ArgumentError("openness: training classes (" + std::to_string(n_train_classes) +
                            ") exceed test classes (" + std::to_string(n_test_classes) + ")");
    return 1.0 - std::sqrt(2.0 * n_train_classes / (n_train_classes + n_test_classes));
}

}  // namespace osrk
