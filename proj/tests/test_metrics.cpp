#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "osrk/metrics.hpp"
#include "osrk/rng.hpp"

using namespace osrk;

TEST_CASE("confusion assembly on clean scenarios") {
    SUBCASE("all correct, no unknowns") {
        std::vector<int> truth = {0, 0, 1, 1, 1, 2};
        OpenSetConfusion c = assemble_confusion(truth, truth, 3);
        CHECK(c.tp[0] == 2);
        CHECK(c.tp[1] == 3);
        CHECK(c.tp[2] == 1);
        for (int k = 0; k < 3; ++k) {
            CHECK(c.fp[static_cast<size_t>(k)] == 0);
            CHECK(c.fn[static_cast<size_t>(k)] == 0);
        }
        CHECK(c.tu == 0);
        CHECK(c.fu == 0);
    }
    SUBCASE("all unknowns rejected") {
        std::vector<int> truth(7, kUnknown);
        std::vector<int> pred(7, kUnknown);
        OpenSetConfusion c = assemble_confusion(pred, truth, 3);
        CHECK(c.tu == 7);
        CHECK(c.fu == 0);
    }
    SUBCASE("known rejected counts FN plus FU") {
        OpenSetConfusion c = assemble_confusion({kUnknown}, {1}, 3);
        CHECK(c.fn[1] == 1);
        CHECK(c.fu == 1);
        CHECK(c.tu == 0);
    }
    SUBCASE("unknown accepted counts FP only") {
        OpenSetConfusion c = assemble_confusion({2}, {kUnknown}, 3);
        CHECK(c.fp[2] == 1);
        CHECK(c.fu == 0);
        CHECK(c.tu == 0);
    }
    SUBCASE("length mismatch is rejected") {
        CHECK_THROWS_AS(assemble_confusion({0, 1}, {0}, 2), ArgumentError);
    }
}

TEST_CASE("confusion assembly matches an exhaustive per-sample tally") {
    Rng rng(99);
    for (int scenario = 0; scenario < 100; ++scenario) {
        const int n_classes = 2 + static_cast<int>(rng.below(4));
        const int n = 50;
        std::vector<int> truth(n), pred(n);
        for (int i = 0; i < n; ++i) {
            truth[static_cast<size_t>(i)] =
                rng.uniform() < 0.25 ? kUnknown : static_cast<int>(rng.below(static_cast<uint64_t>(n_classes)));
            pred[static_cast<size_t>(i)] =
                rng.uniform() < 0.25 ? kUnknown : static_cast<int>(rng.below(static_cast<uint64_t>(n_classes)));
        }
        OpenSetConfusion got = assemble_confusion(pred, truth, n_classes);

        // independent tally
        std::vector<long> tp(static_cast<size_t>(n_classes), 0), fp(tp), fn(tp), tn(tp);
        long tu = 0, fu = 0;
        for (int i = 0; i < n; ++i) {
            int t = truth[static_cast<size_t>(i)], p = pred[static_cast<size_t>(i)];
            if (t == kUnknown && p == kUnknown) tu++;
            if (t != kUnknown && p == kUnknown) fu++;
            for (int k = 0; k < n_classes; ++k) {
                if (t == k && p == k) tp[static_cast<size_t>(k)]++;
                if (t == k && p != k) fn[static_cast<size_t>(k)]++;
                if (t != k && p == k) fp[static_cast<size_t>(k)]++;
                if (t != k && p != k) tn[static_cast<size_t>(k)]++;
            }
        }
        CHECK(got.tu == tu);
        CHECK(got.fu == fu);
        for (int k = 0; k < n_classes; ++k) {
            CHECK(got.tp[static_cast<size_t>(k)] == tp[static_cast<size_t>(k)]);
            CHECK(got.fp[static_cast<size_t>(k)] == fp[static_cast<size_t>(k)]);
            CHECK(got.fn[static_cast<size_t>(k)] == fn[static_cast<size_t>(k)]);
            CHECK(got.tn[static_cast<size_t>(k)] == tn[static_cast<size_t>(k)]);
        }
        // every sample lands on exactly one accounting path
        long row_totals = tu;
        for (int k = 0; k < n_classes; ++k)
            row_totals += got.tp[static_cast<size_t>(k)] + got.fn[static_cast<size_t>(k)];
        long unknown_accepted = 0;
        for (int i = 0; i < n; ++i)
            if (truth[static_cast<size_t>(i)] == kUnknown && pred[static_cast<size_t>(i)] != kUnknown)
                unknown_accepted++;
        CHECK(row_totals + unknown_accepted == n);
    }
}

TEST_CASE("macro metrics") {
    SUBCASE("hand-tallied two-class example") {
        OpenSetConfusion c(2);
        c.tp = {8, 9};
        c.fn = {2, 1};
        c.fp = {1, 2};
        MacroMetrics m = macro_metrics(c);
        CHECK(m.recall == doctest::Approx(0.85).epsilon(1e-12));
        CHECK(m.precision == doctest::Approx((8.0 / 9.0 + 9.0 / 11.0) / 2.0).epsilon(1e-12));
        double f1_0 = 2.0 * (8.0 / 9.0) * 0.8 / (8.0 / 9.0 + 0.8);
        double f1_1 = 2.0 * (9.0 / 11.0) * 0.9 / (9.0 / 11.0 + 0.9);
        CHECK(m.f1 == doctest::Approx((f1_0 + f1_1) / 2.0).epsilon(1e-12));
    }
    SUBCASE("perfect classifier scores 1 everywhere") {
        OpenSetConfusion c(3);
        c.tp = {5, 5, 5};
        MacroMetrics m = macro_metrics(c);
        CHECK(m.recall == 1.0);
        CHECK(m.precision == 1.0);
        CHECK(m.f1 == 1.0);
    }
    SUBCASE("zero denominators resolve to zero") {
        OpenSetConfusion c(2);
        c.tp = {0, 4};
        c.fp = {0, 0};
        c.fn = {0, 0};
        MacroMetrics m = macro_metrics(c);
        CHECK(m.precision == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(std::isfinite(m.f1));
    }
}

TEST_CASE("open-set accuracy") {
    SUBCASE("perfect closed set") {
        OpenSetConfusion c = assemble_confusion({0, 1, 2}, {0, 1, 2}, 3);
        CHECK(openset_accuracy(c) == 1.0);
    }
    SUBCASE("all-unknown, all rejected") {
        OpenSetConfusion c = assemble_confusion({kUnknown, kUnknown}, {kUnknown, kUnknown}, 2);
        CHECK(openset_accuracy(c) == 1.0);
    }
    SUBCASE("random instance equals the direct formula") {
        Rng rng(5);
        for (int t = 0; t < 20; ++t) {
            const int n_classes = 2 + static_cast<int>(rng.below(3));
            std::vector<int> truth, pred;
            for (int i = 0; i < 30; ++i) {
                truth.push_back(rng.uniform() < 0.3 ? kUnknown
                                                    : static_cast<int>(rng.below(static_cast<uint64_t>(n_classes))));
                pred.push_back(rng.uniform() < 0.3 ? kUnknown
                                                   : static_cast<int>(rng.below(static_cast<uint64_t>(n_classes))));
            }
            OpenSetConfusion c = assemble_confusion(pred, truth, n_classes);
            double num = static_cast<double>(c.tu), den = static_cast<double>(c.tu + c.fu);
            for (int k = 0; k < n_classes; ++k) {
                num += static_cast<double>(c.tp[static_cast<size_t>(k)] + c.tn[static_cast<size_t>(k)]);
                den += static_cast<double>(c.tp[static_cast<size_t>(k)] + c.tn[static_cast<size_t>(k)] +
                                           c.fp[static_cast<size_t>(k)] + c.fn[static_cast<size_t>(k)]);
            }
            CHECK(openset_accuracy(c) == num / den);
            CHECK(openset_accuracy(c) >= 0.0);
            CHECK(openset_accuracy(c) <= 1.0);
            MacroMetrics m = macro_metrics(c);
            CHECK(m.recall >= 0.0);
            CHECK(m.recall <= 1.0);
            CHECK(m.precision >= 0.0);
            CHECK(m.precision <= 1.0);
            CHECK(m.f1 >= 0.0);
            CHECK(m.f1 <= 1.0);
        }
    }
}

TEST_CASE("openness measure") {
    CHECK(openness(5, 5) == 0.0);
    CHECK(openness(7, 10) == doctest::Approx(0.0925).epsilon(2e-3));
    CHECK(std::abs(openness(7, 10) - 0.0925) < 1e-4);
    CHECK(std::abs(openness(3, 10) - 0.3206) < 1e-4);
    SUBCASE("strictly decreasing in the training-class count") {
        for (int k = 2; k < 10; ++k) CHECK(openness(k + 1, 10) < openness(k, 10));
    }
    SUBCASE("invalid settings are rejected") {
        CHECK_THROWS_AS(openness(11, 10), ArgumentError);
        CHECK_THROWS_AS(openness(1, 10), ArgumentError);
    }
}
