// osrk: SAR open-set recognition toolkit.
//
// Subcommands: gen-kernels, synth-data, train, eval, sweep-openness,
// limited-sample, export-embeddings, dump-features. Every command writes
// a run manifest alongside its primary output. Exit codes: 0 success,
// 2 configuration error, 3 data error, 4 numerical error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "osrk/dataset.hpp"
#include "osrk/kernel_bank.hpp"
#include "osrk/manifest.hpp"
#include "osrk/metrics.hpp"
#include "osrk/network.hpp"
#include "osrk/protocols.hpp"
#include "osrk/rpl.hpp"
#include "osrk/train.hpp"

namespace fs = std::filesystem;
using namespace osrk;

namespace {

struct GlobalOpts {
    uint64_t seed = 0;
    bool seed_given = false;
    bool deterministic = true;
    int threads = 1;
    std::string config_file;  // key=value overrides
    std::vector<std::string> argv;

    KvConfig overrides() const {
        if (config_file.empty()) return {};
        return KvConfig::parse(read_file(config_file));
    }
};

void apply_overrides(KvConfig& target, const KvConfig& over) {
    for (const auto& [k, v] : over.entries) target.set(k, v);
}

KvConfig read_kv_file_or_empty(const std::string& path, const GlobalOpts& g) {
    KvConfig kv;
    if (!path.empty()) kv = KvConfig::parse(read_file(path));
    apply_overrides(kv, g.overrides());
    return kv;
}

void require_all(const std::vector<std::string>& issues) {
    if (issues.empty()) return;
    std::string msg = "invalid configuration:";
    for (const auto& i : issues) msg += "\n  - " + i;
    throw ConfigError(msg);
}

RadarParams resolve_radar(const std::string& arg, const GlobalOpts& g) {
    KvConfig kv;
    if (arg.empty() || arg == "mstar") {
        kv = RadarParams::mstar_profile().to_kv();
    } else if (arg == "desk") {
        kv = RadarParams::desk_profile().to_kv();
    } else {
        kv = KvConfig::parse(read_file(arg));
    }
    apply_overrides(kv, g.overrides());
    return RadarParams::from_kv(kv);
}

NetworkConfig resolve_net(const std::string& arg, const std::string& bank_path) {
    NetworkConfig cfg;
    if (arg.empty() || arg == "desk")
        cfg = NetworkConfig::desk();
    else if (arg == "full")
        cfg = NetworkConfig::full_scale();
    else
        cfg = NetworkConfig::from_kv(KvConfig::parse(read_file(arg)));
    if (!bank_path.empty()) {
        cfg.first_layer_init = FirstLayerInit::asc_bank;
        cfg.bank_path = bank_path;
    }
    return cfg;
}

// Loads samples and guarantees every sample carries a split tag.
std::vector<SarSample> resolve_samples(const std::string& data_dir, const std::string& manifest,
                                       const std::vector<std::string>& known_for_split,
                                       double test_fraction, uint64_t seed,
                                       bool default_all_test = false) {
    std::vector<SarSample> samples = load_samples_dir(data_dir, manifest);
    bool untagged = false;
    for (const auto& s : samples)
        if (s.metadata.find("split") == s.metadata.end()) untagged = true;
    if (!untagged) return samples;
    if (default_all_test) {
        for (auto& s : samples)
            if (s.metadata.find("split") == s.metadata.end()) s.metadata["split"] = "test";
        return samples;
    }
    std::vector<std::string> known = known_for_split;
    if (known.empty()) {
        for (const auto& s : samples) {
            bool seen = false;
            for (const auto& k : known) seen |= (k == s.label);
            if (!seen) known.push_back(s.label);
        }
        std::sort(known.begin(), known.end());
    }
    // labels outside the known list become test-only unknowns
    std::vector<std::string> unknown;
    for (const auto& s : samples) {
        bool is_known = false;
        for (const auto& k : known) is_known |= (k == s.label);
        bool seen = false;
        for (const auto& u : unknown) seen |= (u == s.label);
        if (!is_known && !seen) unknown.push_back(s.label);
    }
    std::sort(unknown.begin(), unknown.end());
    make_soc_split(samples, known, unknown, test_fraction, seed);
    return samples;
}

std::vector<std::string> sorted_unique_labels(const std::vector<SarSample>& samples) {
    std::vector<std::string> out;
    for (const auto& s : samples) {
        bool seen = false;
        for (const auto& k : out) seen |= (k == s.label);
        if (!seen) out.push_back(s.label);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : csv) {
        if (ch == ',') {
            if (!KvConfig::trim(cur).empty()) out.push_back(KvConfig::trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!KvConfig::trim(cur).empty()) out.push_back(KvConfig::trim(cur));
    return out;
}

double parse_threshold(const std::string& arg) {
    if (arg.empty() || arg == "R" || arg == "r") return kUseLearnedRadius;
    try {
        size_t pos = 0;
        double v = std::stod(arg, &pos);
        if (pos != arg.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("--threshold: expected 'R', 'calibrated' or a number, got '" + arg + "'");
    }
}

GateMode parse_gate(const std::string& arg) {
    if (arg == "euclid") return GateMode::euclid;
    if (arg == "combined") return GateMode::combined;
    throw ConfigError("--gate: expected euclid or combined, got '" + arg + "'");
}

std::string train_echo(const NetworkConfig& ncfg, const std::vector<std::string>& classes,
                       const TrainConfig& tcfg) {
    KvConfig kv = ncfg.to_kv();
    std::string cls;
    for (size_t i = 0; i < classes.size(); ++i) {
        if (i) cls += ",";
        cls += classes[i];
    }
    kv.set("classes", cls);
    kv.set("train.epochs", std::to_string(tcfg.epochs));
    kv.set("train.learning_rate", fmt_g6(tcfg.learning_rate));
    kv.set("train.batch_size", std::to_string(tcfg.batch_size));
    kv.set("train.lambda", fmt_g6(tcfg.lambda));
    kv.set("train.gamma", fmt_g6(tcfg.gamma));
    kv.set("train.momentum", fmt_g6(tcfg.momentum));
    kv.set("train.seed", std::to_string(tcfg.seed));
    return kv.serialize();
}

std::vector<std::string> classes_from_echo(const KvConfig& kv) {
    return split_list(kv.get("classes"));
}

}  // namespace

int main(int argc, char** argv) {
    GlobalOpts g;
    if (const char* env = std::getenv("OSRK_THREADS")) g.threads = std::max(1, std::atoi(env));
    for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);

    CLI::App app{"SAR open-set recognition toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    app.add_option("--seed", g.seed, "run seed")->each([&](const std::string&) { g.seed_given = true; });
    app.add_flag("--deterministic,!--no-deterministic", g.deterministic,
                 "deterministic mode (default on)");
    app.add_option("--threads", g.threads, "worker threads for bank/synthesis builds");
    app.add_option("--config", g.config_file, "key=value override file");

    int exit_code = 0;
    auto guarded = [&](auto&& fn) {
        return [&g, fn, &exit_code]() {
            try {
                fn();
            } catch (const Error& e) {
                std::cerr << "error: " << e.what() << "\n";
                exit_code = e.exit_code();
            }
        };
    };

    // ---------------- gen-kernels ----------------
    auto* gen = app.add_subcommand("gen-kernels", "synthesize a first-layer kernel bank");
    struct {
        int size = 11;
        std::string spec_file, params_file, out, montage, normalize = "zero_mean_unit_l2";
    } gk;
    gen->add_option("--size", gk.size, "stock kernel size (11, 21 or 31)");
    gen->add_option("--spec-file", gk.spec_file, "custom kernel spec (key=value)");
    gen->add_option("--params", gk.params_file, "radar parameter file (default: MSTAR profile)");
    gen->add_option("--out", gk.out, "output bank file")->required();
    gen->add_option("--montage", gk.montage, "optional kernel montage PNG");
    gen->add_option("--normalize", gk.normalize, "zero_mean_unit_l2 or raw_magnitude");
    gen->callback(guarded([&]() {
        RadarParams radar = resolve_radar(gk.params_file, g);
        AscKernelSpec spec;
        if (!gk.spec_file.empty()) {
            spec = AscKernelSpec::from_kv(read_kv_file_or_empty(gk.spec_file, g));
        } else {
            KernelNormalize mode;
            if (gk.normalize == "zero_mean_unit_l2")
                mode = KernelNormalize::zero_mean_unit_l2;
            else if (gk.normalize == "raw_magnitude")
                mode = KernelNormalize::raw_magnitude;
            else
                throw ConfigError("--normalize: expected zero_mean_unit_l2 or raw_magnitude");
            spec = AscKernelSpec::stock(gk.size, radar.spatial_resolution_m, mode);
        }
        KernelBank bank = build_kernel_bank(spec, radar, g.threads);
        fs::path outp(gk.out);
        std::string meta_path = (outp.parent_path() / "bank_meta.csv").string();
        if (outp.parent_path().empty()) meta_path = "bank_meta.csv";
        save_kernel_bank(gk.out, bank, meta_path);

        RunManifest m;
        m.command = "gen-kernels";
        m.argv = g.argv;
        m.seed = g.seed;
        m.deterministic = g.deterministic;
        m.threads = g.threads;
        m.add_config("kernel_size", std::to_string(spec.kernel_size));
        m.add_config("bank_count", std::to_string(bank.count()));
        m.add_config("normalize", gk.normalize);
        for (auto& [k, v] : resolve_radar(gk.params_file, g).to_kv().entries)
            m.add_config("radar." + k, v);
        m.outputs = {gk.out, meta_path};
        if (!gk.montage.empty()) {
            write_file_atomic(gk.montage, encode_png_gray8(render_montage(bank.kernels)));
            m.outputs.push_back(gk.montage);
        }
        m.write_alongside(gk.out);
        std::cout << "wrote " << bank.count() << " kernels of " << bank.kernel_size << "x"
                  << bank.kernel_size << " to " << gk.out << "\n";
    }));

    // ---------------- synth-data ----------------
    auto* synth = app.add_subcommand("synth-data", "generate a labeled synthetic dataset");
    struct {
        std::string config, radar = "desk", out;
    } sd;
    synth->add_option("--config", sd.config, "synthesis config (key=value)");
    synth->add_option("--radar", sd.radar, "radar profile: desk, mstar or a file");
    synth->add_option("--out", sd.out, "output dataset directory")->required();
    synth->callback(guarded([&]() {
        RadarParams radar = resolve_radar(sd.radar, g);
        SynthConfig cfg = SynthConfig::from_kv(read_kv_file_or_empty(sd.config, g));
        if (g.seed_given) cfg.seed = g.seed;
        auto samples = synth_dataset(cfg, radar, g.threads);
        save_sample_dir(sd.out, samples);

        RunManifest m;
        m.command = "synth-data";
        m.argv = g.argv;
        m.seed = cfg.seed;
        m.deterministic = g.deterministic;
        m.threads = g.threads;
        m.add_config("n_classes", std::to_string(cfg.n_classes));
        m.add_config("train_per_class", std::to_string(cfg.train_per_class));
        m.add_config("test_per_class", std::to_string(cfg.test_per_class));
        m.add_config("image_size", std::to_string(cfg.image_size));
        m.add_config("noise_sigma", fmt_g6(cfg.noise_sigma));
        m.outputs = {sd.out + "/manifest.csv"};
        m.write_alongside(sd.out, true);
        std::cout << "wrote " << samples.size() << " samples to " << sd.out << "\n";
    }));

    // ---------------- train ----------------
    auto* train_cmd = app.add_subcommand("train", "train a network and open-set head");
    struct {
        std::string data, manifest, net = "desk", bank, train_config, classes, out, loss_log;
        double test_fraction = 0.3;
    } tr;
    train_cmd->add_option("--data", tr.data, "dataset directory")->required();
    train_cmd->add_option("--data-manifest", tr.manifest, "dataset manifest CSV");
    train_cmd->add_option("--net", tr.net, "network config: desk, full or a file");
    train_cmd->add_option("--bank", tr.bank, "kernel bank for first-layer initialization");
    train_cmd->add_option("--train-config", tr.train_config, "training config (key=value)");
    train_cmd->add_option("--classes", tr.classes, "comma-separated known classes (default: all)");
    train_cmd->add_option("--test-fraction", tr.test_fraction, "split fraction for untagged data");
    train_cmd->add_option("--out", tr.out, "checkpoint output")->required();
    train_cmd->add_option("--loss-log", tr.loss_log, "per-epoch loss CSV");
    train_cmd->callback(guarded([&]() {
        std::vector<std::string> issues;
        if (!fs::is_directory(tr.data)) issues.push_back("--data: not a directory: " + tr.data);
        if (!tr.bank.empty() && !fs::exists(tr.bank)) issues.push_back("--bank: no such file: " + tr.bank);
        if (!tr.train_config.empty() && !fs::exists(tr.train_config))
            issues.push_back("--train-config: no such file: " + tr.train_config);
        require_all(issues);

        TrainConfig tcfg = TrainConfig::from_kv(read_kv_file_or_empty(tr.train_config, g));
        if (g.seed_given) tcfg.seed = g.seed;
        tcfg.deterministic = g.deterministic;

        std::vector<std::string> classes = split_list(tr.classes);
        auto samples = resolve_samples(tr.data, tr.manifest, classes, tr.test_fraction, tcfg.seed);
        if (classes.empty()) classes = sorted_unique_labels(samples);
        if (classes.size() < 2) throw ConfigError("train: need at least 2 known classes");

        NetworkConfig ncfg = resolve_net(tr.net, tr.bank);
        Dataset data = build_dataset(samples, classes, ncfg.input_size);
        if (data.train.size() == 0) throw DataError("train: no training samples after the split");

        Network net = build_network(ncfg, tcfg.seed);
        if (ncfg.first_layer_init == FirstLayerInit::asc_bank)
            init_conv1_from_bank(net, load_kernel_bank(ncfg.bank_path));
        RplHead head(static_cast<int>(classes.size()), ncfg.embedding_dim, tcfg.seed, tcfg.gamma,
                     tcfg.lambda);
        TrainState state = TrainState::fresh(tcfg.seed);
        auto log = fit(net, head, data.train.images, data.train.labels, tcfg, state);

        save_checkpoint(tr.out, make_checkpoint(net, head, state, train_echo(ncfg, classes, tcfg)));
        if (!tr.loss_log.empty()) {
            std::string csv = "epoch,total,classification,boundary\n";
            for (const auto& e : log)
                csv += std::to_string(e.epoch) + "," + fmt_g6(e.total) + "," +
                       fmt_g6(e.classification) + "," + fmt_g6(e.boundary) + "\n";
            write_file_atomic(tr.loss_log, csv);
        }

        RunManifest m;
        m.command = "train";
        m.argv = g.argv;
        m.seed = tcfg.seed;
        m.deterministic = g.deterministic;
        m.threads = g.threads;
        m.add_config("net", tr.net);
        m.add_config("classes", std::to_string(classes.size()));
        m.add_config("train_samples", std::to_string(data.train.size()));
        m.add_config("epochs", std::to_string(tcfg.epochs));
        m.add_config("learning_rate", fmt_g6(tcfg.learning_rate));
        m.add_config("batch_size", std::to_string(tcfg.batch_size));
        m.add_config("lambda", fmt_g6(tcfg.lambda));
        m.add_config("gamma", fmt_g6(tcfg.gamma));
        if (!tr.bank.empty()) m.inputs.push_back(tr.bank);
        m.outputs = {tr.out};
        if (!tr.loss_log.empty()) m.outputs.push_back(tr.loss_log);
        m.write_alongside(tr.out);
        if (!log.empty())
            std::cout << "trained " << log.size() << " epochs; final loss " << fmt_g6(log.back().total)
                      << " (cls " << fmt_g6(log.back().classification) << ", bnd "
                      << fmt_g6(log.back().boundary) << ")\n";
    }));

    // ---------------- eval ----------------
    auto* eval_cmd = app.add_subcommand("eval", "open-set evaluation of a checkpoint");
    struct {
        std::string ckpt, data, manifest, out, gate = "euclid", threshold = "R";
        double percentile = 5.0;
    } ev;
    eval_cmd->add_option("--ckpt", ev.ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--data", ev.data, "dataset directory")->required();
    eval_cmd->add_option("--data-manifest", ev.manifest, "dataset manifest CSV");
    eval_cmd->add_option("--out", ev.out, "report CSV")->required();
    eval_cmd->add_option("--gate", ev.gate, "gating distance: euclid or combined");
    eval_cmd->add_option("--threshold", ev.threshold, "'R', 'calibrated', or a number");
    eval_cmd->add_option("--percentile", ev.percentile, "calibration percentile (default 5)");
    eval_cmd->callback(guarded([&]() {
        std::vector<std::string> issues;
        if (!fs::exists(ev.ckpt)) issues.push_back("--ckpt: no such file: " + ev.ckpt);
        if (!fs::is_directory(ev.data)) issues.push_back("--data: not a directory: " + ev.data);
        require_all(issues);

        RestoredRun run = restore_checkpoint(load_checkpoint(ev.ckpt));
        std::vector<std::string> classes = classes_from_echo(run.config);
        auto samples = resolve_samples(ev.data, ev.manifest, classes, 0.3, g.seed, true);
        Dataset data = build_dataset(samples, classes, run.net.config.input_size);

        EvalOptions opt;
        opt.gate = parse_gate(ev.gate);
        opt.percentile = ev.percentile;
        if (ev.threshold == "calibrated") {
            opt.calibrate = true;
            if (data.train.size() == 0)
                throw DataError("eval: calibration needs training-split samples in --data");
        } else {
            opt.threshold = parse_threshold(ev.threshold);
        }
        EvalResult r = evaluate(run.net, run.head, data.test, opt, &data.train);
        write_file_atomic(ev.out, eval_report_csv(r, classes));

        RunManifest m;
        m.command = "eval";
        m.argv = g.argv;
        m.seed = g.seed;
        m.deterministic = g.deterministic;
        m.threads = g.threads;
        m.add_config("gate", ev.gate);
        m.add_config("threshold", ev.threshold);
        m.add_config("test_samples", std::to_string(data.test.size()));
        m.inputs = {ev.ckpt};
        m.outputs = {ev.out};
        m.write_alongside(ev.out);
        std::cout << "precision " << fmt_g6(r.macro.precision) << "  recall " << fmt_g6(r.macro.recall)
                  << "  f1 " << fmt_g6(r.macro.f1) << "  accuracy " << fmt_g6(r.accuracy)
                  << "  closed " << fmt_g6(r.closed_accuracy) << "\n";
    }));

    // ---------------- sweep-openness ----------------
    auto* sweep = app.add_subcommand("sweep-openness", "train/evaluate across known-class counts");
    struct {
        std::string data, manifest, net = "desk", bank, train_config, class_order, out;
        int k_min = 3, k_max = 7, reps = 3;
        std::string gate = "euclid", threshold = "R";
    } sw;
    sweep->add_option("--data", sw.data, "dataset directory")->required();
    sweep->add_option("--data-manifest", sw.manifest, "dataset manifest CSV");
    sweep->add_option("--net", sw.net, "network config");
    sweep->add_option("--bank", sw.bank, "kernel bank for first-layer initialization");
    sweep->add_option("--train-config", sw.train_config, "training config");
    sweep->add_option("--class-order", sw.class_order, "comma-separated class order");
    sweep->add_option("--k-min", sw.k_min, "smallest known-class count");
    sweep->add_option("--k-max", sw.k_max, "largest known-class count");
    sweep->add_option("--reps", sw.reps, "repetitions per setting");
    sweep->add_option("--gate", sw.gate, "gating distance");
    sweep->add_option("--threshold", sw.threshold, "'R', 'calibrated', or a number");
    sweep->add_option("--out", sw.out, "sweep CSV")->required();
    sweep->callback(guarded([&]() {
        TrainConfig tcfg = TrainConfig::from_kv(read_kv_file_or_empty(sw.train_config, g));
        if (g.seed_given) tcfg.seed = g.seed;
        auto samples = resolve_samples(sw.data, sw.manifest, {}, 0.3, tcfg.seed);
        std::vector<std::string> order = split_list(sw.class_order);
        if (order.empty()) order = sorted_unique_labels(samples);

        NetworkConfig ncfg = resolve_net(sw.net, sw.bank);
        KernelBank bank;
        bool have_bank = ncfg.first_layer_init == FirstLayerInit::asc_bank;
        if (have_bank) bank = load_kernel_bank(ncfg.bank_path);

        SweepSettings st;
        st.k_min = sw.k_min;
        st.k_max = sw.k_max;
        st.repetitions = sw.reps;
        st.seed = tcfg.seed;
        st.eval.gate = parse_gate(sw.gate);
        if (sw.threshold == "calibrated")
            st.eval.calibrate = true;
        else
            st.eval.threshold = parse_threshold(sw.threshold);
        auto rows = run_openness_sweep(samples, order, ncfg, have_bank ? &bank : nullptr, tcfg, st);
        write_file_atomic(sw.out, sweep_csv(rows));

        RunManifest m;
        m.command = "sweep-openness";
        m.argv = g.argv;
        m.seed = tcfg.seed;
        m.deterministic = g.deterministic;
        m.threads = g.threads;
        m.add_config("k_min", std::to_string(sw.k_min));
        m.add_config("k_max", std::to_string(sw.k_max));
        m.add_config("repetitions", std::to_string(sw.reps));
        if (!sw.bank.empty()) m.inputs.push_back(sw.bank);
        m.outputs = {sw.out};
        m.write_alongside(sw.out);
        std::cout << "wrote " << rows.size() << " sweep rows to " << sw.out << "\n";
    }));

    // ---------------- limited-sample ----------------
    auto* lim = app.add_subcommand("limited-sample", "closed-set accuracy vs training-set size");
    struct {
        std::string data, manifest, net = "desk", bank, train_config, counts = "20,40,60,80", out;
        bool paired = false, azimuth_block = false;
    } li;
    lim->add_option("--data", li.data, "dataset directory")->required();
    lim->add_option("--data-manifest", li.manifest, "dataset manifest CSV");
    lim->add_option("--net", li.net, "network config");
    lim->add_option("--bank", li.bank, "kernel bank");
    lim->add_option("--train-config", li.train_config, "training config");
    lim->add_option("--counts", li.counts, "per-class training counts");
    lim->add_flag("--paired", li.paired, "paired random/bank first-layer ablation");
    lim->add_flag("--azimuth-block", li.azimuth_block, "contiguous azimuth block subsampling");
    lim->add_option("--out", li.out, "result CSV")->required();
    lim->callback(guarded([&]() {
        TrainConfig tcfg = TrainConfig::from_kv(read_kv_file_or_empty(li.train_config, g));
        if (g.seed_given) tcfg.seed = g.seed;
        auto samples = resolve_samples(li.data, li.manifest, {}, 0.3, tcfg.seed);
        std::vector<std::string> classes = sorted_unique_labels(samples);
        NetworkConfig ncfg = resolve_net(li.net, li.bank);
        Dataset data = build_dataset(samples, classes, ncfg.input_size);

        KernelBank bank;
        bool have_bank = ncfg.first_layer_init == FirstLayerInit::asc_bank;
        if (have_bank) bank = load_kernel_bank(ncfg.bank_path);

        LimitedSettings ls;
        ls.per_class_counts.clear();
        for (const auto& c : split_list(li.counts))
            ls.per_class_counts.push_back(static_cast<int>(KvConfig::to_int("--counts", c)));
        if (ls.per_class_counts.empty()) throw ConfigError("--counts: no counts given");
        ls.paired_bank_ablation = li.paired;
        ls.azimuth_block = li.azimuth_block;
        ls.seed = tcfg.seed;
        auto rows = run_limited_sample(samples, data, ncfg, have_bank ? &bank : nullptr, tcfg, ls);
        write_file_atomic(li.out, limited_csv(rows));

        RunManifest m;
        m.command = "limited-sample";
        m.argv = g.argv;
        m.seed = tcfg.seed;
        m.deterministic = g.deterministic;
        m.threads = g.threads;
        m.add_config("counts", li.counts);
        m.add_config("paired", li.paired ? "true" : "false");
        if (!li.bank.empty()) m.inputs.push_back(li.bank);
        m.outputs = {li.out};
        m.write_alongside(li.out);
        std::cout << "wrote " << rows.size() << " rows to " << li.out << "\n";
    }));

    // ---------------- export-embeddings ----------------
    auto* emb = app.add_subcommand("export-embeddings", "dump embeddings with open-set decisions");
    struct {
        std::string ckpt, data, manifest, out, split = "test", gate = "euclid", threshold = "R";
    } ex;
    emb->add_option("--ckpt", ex.ckpt, "checkpoint file")->required();
    emb->add_option("--data", ex.data, "dataset directory")->required();
    emb->add_option("--data-manifest", ex.manifest, "dataset manifest CSV");
    emb->add_option("--split", ex.split, "test (default) or train");
    emb->add_option("--gate", ex.gate, "gating distance");
    emb->add_option("--threshold", ex.threshold, "'R' or a number");
    emb->add_option("--out", ex.out, "embedding CSV")->required();
    emb->callback(guarded([&]() {
        RestoredRun run = restore_checkpoint(load_checkpoint(ex.ckpt));
        std::vector<std::string> classes = classes_from_echo(run.config);
        auto samples = resolve_samples(ex.data, ex.manifest, classes, 0.3, g.seed, true);
        Dataset data = build_dataset(samples, classes, run.net.config.input_size);
        const SampleSet& set = ex.split == "train" ? data.train : data.test;
        EvalOptions opt;
        opt.gate = parse_gate(ex.gate);
        opt.threshold = parse_threshold(ex.threshold);
        write_file_atomic(ex.out, embeddings_csv(run.net, run.head, set, classes, opt));

        RunManifest m;
        m.command = "export-embeddings";
        m.argv = g.argv;
        m.seed = g.seed;
        m.deterministic = g.deterministic;
        m.threads = g.threads;
        m.add_config("split", ex.split);
        m.inputs = {ex.ckpt};
        m.outputs = {ex.out};
        m.write_alongside(ex.out);
        std::cout << "wrote " << set.size() << " embedding rows to " << ex.out << "\n";
    }));

    // ---------------- dump-features ----------------
    auto* dump = app.add_subcommand("dump-features", "write per-channel feature maps as PNGs");
    struct {
        std::string ckpt, image, out;
        int layer = 0;
    } df;
    dump->add_option("--ckpt", df.ckpt, "checkpoint file")->required();
    dump->add_option("--image", df.image, "input image (PNG, Phoenix or tensor file)")->required();
    dump->add_option("--layer", df.layer, "conv layer index (0-based)");
    dump->add_option("--out", df.out, "output directory")->required();
    dump->callback(guarded([&]() {
        RestoredRun run = restore_checkpoint(load_checkpoint(df.ckpt));
        SarSample sample = load_sample(df.image);
        Tensor input = preprocess(sample, run.net.config.input_size);
        Tensor captured;
        run.net.forward_capture(input, df.layer, captured);

        fs::create_directories(df.out);
        const int channels = captured.dim(0);
        const int h = captured.dim(1), w = captured.dim(2);
        std::vector<RealMatrix> maps;
        maps.reserve(static_cast<size_t>(channels));
        for (int c = 0; c < channels; ++c) {
            RealMatrix mch(h, w);
            std::copy_n(captured.v.begin() + static_cast<size_t>(c) * h * w, static_cast<size_t>(h) * w,
                        mch.v.begin());
            maps.push_back(std::move(mch));
        }
        for (int c = 0; c < channels; ++c) {
            char name[32];
            std::snprintf(name, sizeof(name), "ch_%04d.png", c);
            write_file_atomic(df.out + "/" + name,
                              encode_png_gray8(normalize_for_display(maps[static_cast<size_t>(c)])));
        }
        write_file_atomic(df.out + "/montage.png", encode_png_gray8(render_montage(maps)));

        RunManifest m;
        m.command = "dump-features";
        m.argv = g.argv;
        m.seed = g.seed;
        m.deterministic = g.deterministic;
        m.threads = g.threads;
        m.add_config("layer", std::to_string(df.layer));
        m.add_config("channels", std::to_string(channels));
        m.inputs = {df.ckpt, df.image};
        m.outputs = {df.out + "/montage.png"};
        m.write_alongside(df.out, true);
        std::cout << "wrote " << channels << " feature maps to " << df.out << "\n";
    }));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}
