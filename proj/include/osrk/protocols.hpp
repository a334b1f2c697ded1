#pragma once

// Experiment protocols: single-model open-set evaluation, the openness
// sweep (grow the known-class count, test against everything) and the
// limited-sample closed-set protocol with paired random-vs-bank first
// layer initialization. All runs are deterministic under their seeds.

#include <cstdio>
#include <string>
#include <vector>

#include "osrk/dataset.hpp"
#include "osrk/metrics.hpp"
#include "osrk/network.hpp"
#include "osrk/rpl.hpp"
#include "osrk/train.hpp"

namespace osrk {

inline std::string fmt_g6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// ============================================================
// Evaluation
// ============================================================

struct EvalOptions {
    GateMode gate = GateMode::euclid;
    double threshold = kUseLearnedRadius;  // NaN -> learned radius
    bool calibrate = false;                // percentile of training gating distances
    double percentile = 5.0;
};

struct EvalResult {
    OpenSetConfusion confusion{0};
    MacroMetrics macro;
    double accuracy = 0.0;         // open-set accuracy over everything
    double closed_accuracy = 0.0;  // argmax-only accuracy on known-truth samples
    double threshold_used = 0.0;
    std::vector<OpenPrediction> predictions;
    std::vector<int> predicted_labels;
};

inline double gating_of(Network& net, RplHead& head, const Tensor& image, GateMode gate) {
    Tensor emb = net.forward(image, false);
    OpenPrediction p = predict_open(emb.v, head, gate, -std::numeric_limits<double>::infinity());
    return p.gating_distance;
}

inline EvalResult evaluate(Network& net, RplHead& head, const SampleSet& test,
                           const EvalOptions& opt = {}, const SampleSet* calibration_set = nullptr) {
    EvalResult r;
    double threshold = opt.threshold;
    if (opt.calibrate) {
        if (!calibration_set || calibration_set->images.empty())
            throw ArgumentError("evaluate: calibration requested without a calibration set");
        std::vector<double> gd;
        gd.reserve(calibration_set->images.size());
        for (const auto& img : calibration_set->images)
            gd.push_back(gating_of(net, head, img, opt.gate));
        threshold = calibrate_threshold(gd, opt.percentile);
    }
    long known_total = 0, known_correct = 0;
    for (size_t i = 0; i < test.images.size(); ++i) {
        Tensor emb = net.forward(test.images[i], false);
        OpenPrediction p = predict_open(emb.v, head, opt.gate, threshold);
        if (test.labels[i] != kUnknown) {
            known_total++;
            int argmax = 0;
            for (int k = 1; k < head.n_classes(); ++k)
                if (p.distances[static_cast<size_t>(k)] > p.distances[static_cast<size_t>(argmax)])
                    argmax = k;
            if (argmax == test.labels[i]) known_correct++;
        }
        r.threshold_used = p.threshold_used;
        r.predicted_labels.push_back(p.class_index);
        r.predictions.push_back(std::move(p));
    }
    r.confusion = assemble_confusion(r.predicted_labels, test.labels, head.n_classes());
    r.macro = macro_metrics(r.confusion);
    r.accuracy = openset_accuracy(r.confusion);
    r.closed_accuracy = known_total > 0 ? static_cast<double>(known_correct) / known_total : 0.0;
    return r;
}

// Report CSV: documented accounting in the header comment, one row of
// headline metrics, then the per-class confusion.
inline std::string eval_report_csv(const EvalResult& r, const std::vector<std::string>& class_names) {
    std::string out;
    out += "# unknown accounting: TU = unknown correctly rejected, FU = known incorrectly "
           "rejected; unknown-truth samples accepted as class j count FP of j\n";
    out += "metric,value\n";
    out += "precision," + fmt_g6(r.macro.precision) + "\n";
    out += "recall," + fmt_g6(r.macro.recall) + "\n";
    out += "f1," + fmt_g6(r.macro.f1) + "\n";
    out += "accuracy," + fmt_g6(r.accuracy) + "\n";
    out += "closed_accuracy," + fmt_g6(r.closed_accuracy) + "\n";
    out += "threshold," + fmt_g6(r.threshold_used) + "\n";
    out += "tu," + std::to_string(r.confusion.tu) + "\n";
    out += "fu," + std::to_string(r.confusion.fu) + "\n";
    out += "class,tp,fp,fn,tn\n";
    for (int k = 0; k < r.confusion.n_classes; ++k) {
        out += class_names[static_cast<size_t>(k)] + "," +
               std::to_string(r.confusion.tp[static_cast<size_t>(k)]) + "," +
               std::to_string(r.confusion.fp[static_cast<size_t>(k)]) + "," +
               std::to_string(r.confusion.fn[static_cast<size_t>(k)]) + "," +
               std::to_string(r.confusion.tn[static_cast<size_t>(k)]) + "\n";
    }
    return out;
}

// ============================================================
// Openness sweep
// ============================================================

struct SweepSettings {
    int k_min = 3;
    int k_max = 7;
    int repetitions = 3;
    uint64_t seed = 0;
    EvalOptions eval;
};

struct SweepRow {
    int k_known = 0;
    double openness = 0.0;
    double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;
    double precision_min = 0.0, precision_max = 0.0;
    double recall_min = 0.0, recall_max = 0.0;
    double f1_min = 0.0, f1_max = 0.0;
    double accuracy_min = 0.0, accuracy_max = 0.0;
    int repetitions = 0;
    uint64_t seed = 0;
};

// Builds a dataset view for the first k classes of class_order as known.
inline Dataset sweep_view(const std::vector<SarSample>& samples,
                          const std::vector<std::string>& class_order, int k, int input_size) {
    std::vector<std::string> known(class_order.begin(), class_order.begin() + k);
    return build_dataset(samples, known, input_size);
}

// Trains on the first k classes, evaluates against every class, for each
// k in [k_min, k_max], repeated with derived seeds and aggregated as
// mean with min/max spread.
inline std::vector<SweepRow> run_openness_sweep(const std::vector<SarSample>& samples,
                                                const std::vector<std::string>& class_order,
                                                const NetworkConfig& net_cfg,
                                                const KernelBank* bank, const TrainConfig& tcfg,
                                                const SweepSettings& sw) {
    const int total_classes = static_cast<int>(class_order.size());
    if (sw.k_min < 2 || sw.k_min > sw.k_max || sw.k_max > total_classes)
        throw ConfigError("sweep: need 2 <= k_min <= k_max <= " + std::to_string(total_classes));
    if (sw.repetitions < 1) throw ConfigError("sweep: repetitions must be >= 1");

    std::vector<SweepRow> rows;
    for (int k = sw.k_min; k <= sw.k_max; ++k) {
        Dataset view = sweep_view(samples, class_order, k, net_cfg.input_size);
        SweepRow row;
        row.k_known = k;
        row.openness = openness(k, total_classes);
        row.repetitions = sw.repetitions;
        row.seed = sw.seed;
        bool first = true;
        for (int rep = 0; rep < sw.repetitions; ++rep) {
            const uint64_t run_seed = mix_seed(sw.seed, static_cast<uint64_t>(k),
                                               static_cast<uint64_t>(rep) + 1);
            Network net = build_network(net_cfg, run_seed);
            if (bank) init_conv1_from_bank(net, *bank);
            RplHead head(k, net_cfg.embedding_dim, run_seed, tcfg.gamma, tcfg.lambda);
            TrainConfig rcfg = tcfg;
            rcfg.seed = run_seed;
            TrainState state = TrainState::fresh(run_seed);
            fit(net, head, view.train.images, view.train.labels, rcfg, state);
            EvalResult er = evaluate(net, head, view.test, sw.eval, &view.train);
            auto fold = [&](double v, double& mean, double& lo, double& hi) {
                mean += v / sw.repetitions;
                if (first || v < lo) lo = v;
                if (first || v > hi) hi = v;
            };
            fold(er.macro.precision, row.precision, row.precision_min, row.precision_max);
            fold(er.macro.recall, row.recall, row.recall_min, row.recall_max);
            fold(er.macro.f1, row.f1, row.f1_min, row.f1_max);
            fold(er.accuracy, row.accuracy, row.accuracy_min, row.accuracy_max);
            first = false;
        }
        rows.push_back(row);
    }
    return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out =
        "k_known,openness,precision,recall,f1,accuracy,precision_min,precision_max,"
        "recall_min,recall_max,f1_min,f1_max,accuracy_min,accuracy_max,repetitions,seed\n";
    for (const auto& r : rows) {
        out += std::to_string(r.k_known) + "," + fmt_g6(r.openness) + "," + fmt_g6(r.precision) +
               "," + fmt_g6(r.recall) + "," + fmt_g6(r.f1) + "," + fmt_g6(r.accuracy) + "," +
               fmt_g6(r.precision_min) + "," + fmt_g6(r.precision_max) + "," +
               fmt_g6(r.recall_min) + "," + fmt_g6(r.recall_max) + "," + fmt_g6(r.f1_min) + "," +
               fmt_g6(r.f1_max) + "," + fmt_g6(r.accuracy_min) + "," + fmt_g6(r.accuracy_max) +
               "," + std::to_string(r.repetitions) + "," + std::to_string(r.seed) + "\n";
    }
    return out;
}

// ============================================================
// Limited-sample closed-set protocol
// ============================================================

struct LimitedSettings {
    std::vector<int> per_class_counts = {20, 40, 60, 80};
    bool paired_bank_ablation = false;  // run random and bank inits under one seed
    bool azimuth_block = false;         // contiguous azimuth block instead of random subset
    uint64_t seed = 0;
};

struct LimitedRow {
    int per_class = 0;
    std::string init;  // "random" or "asc_bank"
    double accuracy = 0.0;
    uint64_t seed = 0;
};

// Deterministic per-class subsample of the training set.
inline SampleSet subsample_train(const Dataset& d, int per_class, bool azimuth_block,
                                 const std::vector<SarSample>* samples, uint64_t seed) {
    const int n_classes = static_cast<int>(d.class_names.size());
    SampleSet out;
    for (int cls = 0; cls < n_classes; ++cls) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < d.train.size(); ++i)
            if (d.train.labels[i] == cls) idx.push_back(i);
        if (static_cast<int>(idx.size()) < per_class)
            throw ArgumentError("limited-sample: class '" + d.class_names[static_cast<size_t>(cls)] +
                                "' has " + std::to_string(idx.size()) + " training samples, need " +
                                std::to_string(per_class));
        Rng rng(mix_seed(seed, 0x737562, static_cast<uint64_t>(cls)));
        if (azimuth_block && samples) {
            // order by azimuth when available and take a contiguous block
            std::vector<std::pair<double, size_t>> by_az;
            bool have_all = true;
            for (size_t i : idx) {
                double az = 0.0;
                bool found = false;
                for (const auto& s : *samples) {
                    if (s.id == d.train.ids[i]) {
                        auto it = s.metadata.find("azimuth_deg");
                        if (it != s.metadata.end()) {
                            az = std::stod(it->second);
                            found = true;
                        }
                        break;
                    }
                }
                have_all &= found;
                by_az.emplace_back(az, i);
            }
            if (have_all) {
                std::sort(by_az.begin(), by_az.end());
                size_t start = static_cast<size_t>(rng.below(by_az.size()));
                for (int j = 0; j < per_class; ++j) {
                    size_t i = by_az[(start + static_cast<size_t>(j)) % by_az.size()].second;
                    out.images.push_back(d.train.images[i]);
                    out.labels.push_back(cls);
                    out.ids.push_back(d.train.ids[i]);
                }
                continue;
            }
        }
        rng.shuffle(idx);
        for (int j = 0; j < per_class; ++j) {
            out.images.push_back(d.train.images[idx[static_cast<size_t>(j)]]);
            out.labels.push_back(cls);
            out.ids.push_back(d.train.ids[idx[static_cast<size_t>(j)]]);
        }
    }
    return out;
}

// Closed-set accuracy: no rejection gate, every class known.
inline double closed_set_accuracy(Network& net, RplHead& head, const SampleSet& test) {
    EvalOptions opt;
    opt.threshold = -std::numeric_limits<double>::infinity();
    EvalResult r = evaluate(net, head, test, opt);
    return r.closed_accuracy;
}

inline std::vector<LimitedRow> run_limited_sample(const std::vector<SarSample>& samples,
                                                  const Dataset& dataset,
                                                  const NetworkConfig& net_cfg,
                                                  const KernelBank* bank, const TrainConfig& tcfg,
                                                  const LimitedSettings& ls) {
    std::vector<LimitedRow> rows;
    for (int count : ls.per_class_counts) {
        SampleSet train = subsample_train(dataset, count, ls.azimuth_block, &samples, ls.seed);
        const uint64_t run_seed = mix_seed(ls.seed, static_cast<uint64_t>(count));
        std::vector<std::pair<std::string, const KernelBank*>> variants;
        if (ls.paired_bank_ablation) {
            if (!bank) throw ConfigError("limited-sample: paired ablation needs a kernel bank");
            variants = {{"random", nullptr}, {"asc_bank", bank}};
        } else {
            variants = {{bank ? "asc_bank" : "random", bank}};
        }
        for (auto& [name, b] : variants) {
            Network net = build_network(net_cfg, run_seed);
            if (b) init_conv1_from_bank(net, *b);
            RplHead head(static_cast<int>(dataset.class_names.size()), net_cfg.embedding_dim,
                         run_seed, tcfg.gamma, 0.0);
            TrainConfig rcfg = tcfg;
            rcfg.lambda = 0.0;  // closed set: no boundary term, no rejection
            rcfg.seed = run_seed;
            TrainState state = TrainState::fresh(run_seed);
            fit(net, head, train.images, train.labels, rcfg, state);
            LimitedRow row;
            row.per_class = count;
            row.init = name;
            row.accuracy = closed_set_accuracy(net, head, dataset.test);
            row.seed = run_seed;
            rows.push_back(row);
        }
    }
    return rows;
}

inline std::string limited_csv(const std::vector<LimitedRow>& rows) {
    std::string out = "per_class,init,accuracy,seed\n";
    for (const auto& r : rows)
        out += std::to_string(r.per_class) + "," + r.init + "," + fmt_g6(r.accuracy) + "," +
               std::to_string(r.seed) + "\n";
    return out;
}

// Embedding export rows: sample_id, truth, prediction, gating distance,
// then the embedding coordinates.
inline std::string embeddings_csv(Network& net, RplHead& head, const SampleSet& set,
                                  const std::vector<std::string>& class_names,
                                  const EvalOptions& opt = {}) {
    std::string out = "sample_id,true_label,predicted,gating_distance";
    for (int j = 0; j < head.dim(); ++j) out += ",e_" + std::to_string(j + 1);
    out += "\n";
    auto name_of = [&](int label) {
        return label == kUnknown ? std::string("UNKNOWN") : class_names[static_cast<size_t>(label)];
    };
    for (size_t i = 0; i < set.images.size(); ++i) {
        Tensor emb = net.forward(set.images[i], false);
        OpenPrediction p = predict_open(emb.v, head, opt.gate, opt.threshold);
        out += set.ids[i] + "," + name_of(set.labels[i]) + "," + name_of(p.class_index) + "," +
               fmt_g6(p.gating_distance);
        char buf[40];
        for (double x : emb.v) {
            std::snprintf(buf, sizeof(buf), ",%.9g", x);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

}  // namespace osrk
