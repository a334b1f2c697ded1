#pragma once

// Sample ingestion and dataset assembly: MSTAR/PNG/tensor-file loading
// with optional manifest, SOC-style splits, synthetic scatterer-scene
// generation, and preprocessing into network-ready tensors.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "osrk/asc.hpp"
#include "osrk/kernel_bank.hpp"  // file helpers
#include "osrk/kv_config.hpp"
#include "osrk/mstar.hpp"
#include "osrk/png_io.hpp"
#include "osrk/rpl.hpp"  // kUnknown
#include "osrk/tensor.hpp"

namespace osrk {

struct SarSample {
    RealMatrix magnitude;
    std::optional<RealMatrix> phase;
    std::string label;
    std::string id;
    std::map<std::string, std::string> metadata;  // split, depression_deg, azimuth_deg, ...

    void check() const {
        for (double x : magnitude.v)
            if (!std::isfinite(x) || x < 0)
                throw DataError("sample '" + id + "': magnitude must be finite and non-negative");
        if (phase && (phase->rows != magnitude.rows || phase->cols != magnitude.cols))
            throw ShapeError("sample '" + id + "': phase shape differs from magnitude");
    }
};

// ============================================================
// Preprocessing
// ============================================================

enum class ResizeMode { pad, center_crop };

// Center-aligned crop/pad to target x target, then per-image max scaling
// into [0,1] (all-zero images pass through). The center pixel convention
// matches crop_center: index (n-1)/2.
inline Tensor preprocess(const SarSample& sample, int target, ResizeMode mode = ResizeMode::pad,
                         bool log_magnitude = false) {
    if (target < 1) throw ConfigError("preprocess: target size must be >= 1");
    const RealMatrix& src = sample.magnitude;
    if (mode == ResizeMode::center_crop && (target > src.rows || target > src.cols))
        throw ConfigError("preprocess: center_crop cannot grow " + std::to_string(src.rows) + "x" +
                          std::to_string(src.cols) + " to " + std::to_string(target));
    Tensor out({1, target, target});
    const int offr = (target - 1) / 2 - (src.rows - 1) / 2;
    const int offc = (target - 1) / 2 - (src.cols - 1) / 2;
    double maxv = 0.0;
    for (int r = 0; r < src.rows; ++r) {
        const int tr = r + offr;
        if (tr < 0 || tr >= target) continue;
        for (int c = 0; c < src.cols; ++c) {
            const int tc = c + offc;
            if (tc < 0 || tc >= target) continue;
            double x = src(r, c);
            if (log_magnitude) x = std::log1p(x);
            out.v[static_cast<size_t>(tr) * target + tc] = x;
            maxv = std::max(maxv, x);
        }
    }
    if (maxv > 0)
        for (double& x : out.v) x /= maxv;
    return out;
}

// ============================================================
// Dataset containers
// ============================================================

struct SampleSet {
    std::vector<Tensor> images;
    std::vector<int> labels;  // index into class_names, or kUnknown
    std::vector<std::string> ids;

    size_t size() const { return images.size(); }
};

struct Dataset {
    std::vector<std::string> class_names;  // known classes, index = label
    SampleSet train;
    SampleSet test;

    int label_of(const std::string& name) const {
        for (size_t i = 0; i < class_names.size(); ++i)
            if (class_names[i] == name) return static_cast<int>(i);
        return kUnknown;
    }
};

// Maps labeled samples into a Dataset using their split tags. Samples
// whose label is not in class_names become unknown-truth test samples.
inline Dataset build_dataset(const std::vector<SarSample>& samples,
                             const std::vector<std::string>& class_names, int target,
                             ResizeMode mode = ResizeMode::pad) {
    Dataset d;
    d.class_names = class_names;
    for (const auto& s : samples) {
        auto it = s.metadata.find("split");
        if (it == s.metadata.end())
            throw DataError("sample '" + s.id + "': no split tag; run a split first");
        const int label = d.label_of(s.label);
        SampleSet* dst = nullptr;
        if (it->second == "train") {
            if (label == kUnknown) continue;  // unknown classes never train
            dst = &d.train;
        } else if (it->second == "test") {
            dst = &d.test;
        } else if (it->second == "unused") {
            continue;
        } else {
            throw DataError("sample '" + s.id + "': bad split tag '" + it->second + "'");
        }
        dst->images.push_back(preprocess(s, target, mode));
        dst->labels.push_back(label);
        dst->ids.push_back(s.id);
    }
    return d;
}

// ============================================================
// SOC split
// ============================================================

struct SocSplit {
    std::vector<std::string> known_classes;
    std::vector<std::string> unknown_classes;
    std::vector<size_t> train_indices;
    std::vector<size_t> test_indices;
};

namespace dataset_detail {
inline bool depression_near(const SarSample& s, double deg) {
    auto it = s.metadata.find("depression_deg");
    if (it == s.metadata.end()) return false;
    try {
        return std::abs(std::stod(it->second) - deg) < 0.5;
    } catch (const std::exception&) {
        return false;
    }
}
}  // namespace dataset_detail

// When depression metadata is present on every involved sample the split
// follows the SOC convention (17 degrees trains, 15 degrees tests);
// otherwise a seeded stratified split with the given test fraction.
// Unknown classes contribute test samples only. Tags each selected
// sample's metadata["split"].
inline SocSplit make_soc_split(std::vector<SarSample>& samples,
                               const std::vector<std::string>& known,
                               const std::vector<std::string>& unknown,
                               double test_fraction = 0.3, uint64_t seed = 0,
                               double train_depression = 17.0, double test_depression = 15.0) {
    for (const auto& k : known)
        for (const auto& u : unknown)
            if (k == u) throw ConfigError("make_soc_split: class '" + k + "' is both known and unknown");
    if (test_fraction <= 0 || test_fraction >= 1)
        throw ConfigError("make_soc_split: test_fraction must be in (0,1)");

    SocSplit split;
    split.known_classes = known;
    split.unknown_classes = unknown;

    auto class_indices = [&](const std::string& cls) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < samples.size(); ++i)
            if (samples[i].label == cls) idx.push_back(i);
        if (idx.empty()) throw ConfigError("make_soc_split: class '" + cls + "' has no samples");
        return idx;
    };

    bool all_tagged = true;
    for (const auto& s : samples)
        if (s.metadata.find("depression_deg") == s.metadata.end()) {
            all_tagged = false;
            break;
        }

    auto add = [&](size_t i, bool train) {
        samples[i].metadata["split"] = train ? "train" : "test";
        (train ? split.train_indices : split.test_indices).push_back(i);
    };

    std::vector<std::string> all_classes = known;
    all_classes.insert(all_classes.end(), unknown.begin(), unknown.end());
    for (const auto& cls : all_classes) {
        bool is_known = false;
        for (const auto& k : known) is_known |= (k == cls);
        std::vector<size_t> idx = class_indices(cls);
        if (all_tagged) {
            for (size_t i : idx) {
                if (is_known && dataset_detail::depression_near(samples[i], train_depression))
                    add(i, true);
                else if (dataset_detail::depression_near(samples[i], test_depression))
                    add(i, false);
            }
        } else {
            Rng rng(mix_seed(seed, 0x73706c69, std::hash<std::string>{}(cls)));
            rng.shuffle(idx);
            size_t n_test = std::max<size_t>(1, static_cast<size_t>(
                                                    std::lround(test_fraction * static_cast<double>(idx.size()))));
            for (size_t j = 0; j < idx.size(); ++j) {
                bool test = j < n_test;
                if (test)
                    add(idx[j], false);
                else if (is_known)
                    add(idx[j], true);
                else
                    samples[idx[j]].metadata["split"] = "unused";
            }
        }
    }
    // anything the split did not select (off-angle samples, classes outside
    // the split) is explicitly marked so dataset assembly can skip it
    for (auto& s : samples)
        if (s.metadata.find("split") == s.metadata.end()) s.metadata["split"] = "unused";
    return split;
}

// ============================================================
// Synthetic scatterer-scene datasets
// ============================================================

struct SynthConfig {
    int n_classes = 5;
    int train_per_class = 200;
    int test_per_class = 100;
    int min_scatterers = 4;
    int max_scatterers = 7;
    double jitter_amplitude = 0.1;
    double jitter_position_m = 0.05;
    double jitter_length_m = 0.05;
    double jitter_orientation_deg = 2.0;
    double noise_sigma = 0.02;
    int image_size = 64;
    uint64_t seed = 0;

    void validate(const RadarParams& radar) const {
        if (n_classes < 1) throw ConfigError("synth: n_classes must be >= 1");
        if (train_per_class < 1 || test_per_class < 0)
            throw ConfigError("synth: per-class counts must be positive");
        if (min_scatterers < 1 || max_scatterers < min_scatterers)
            throw ConfigError("synth: bad scatterer count range");
        if (noise_sigma < 0) throw ConfigError("synth: noise_sigma must be >= 0");
        if (image_size < 8) throw ConfigError("synth: image_size must be >= 8");
        if (image_size > radar.padded_rows())
            throw ConfigError("synth: image_size " + std::to_string(image_size) +
                              " exceeds the " + std::to_string(radar.padded_rows()) +
                              "-point radar grid");
    }

    static SynthConfig from_kv(const KvConfig& kv) {
        SynthConfig c;
        c.n_classes = static_cast<int>(kv.get_int_or("n_classes", c.n_classes));
        c.train_per_class = static_cast<int>(kv.get_int_or("train_per_class", c.train_per_class));
        c.test_per_class = static_cast<int>(kv.get_int_or("test_per_class", c.test_per_class));
        c.min_scatterers = static_cast<int>(kv.get_int_or("min_scatterers", c.min_scatterers));
        c.max_scatterers = static_cast<int>(kv.get_int_or("max_scatterers", c.max_scatterers));
        c.jitter_amplitude = kv.get_double_or("jitter_amplitude", c.jitter_amplitude);
        c.jitter_position_m = kv.get_double_or("jitter_position_m", c.jitter_position_m);
        c.jitter_length_m = kv.get_double_or("jitter_length_m", c.jitter_length_m);
        c.jitter_orientation_deg = kv.get_double_or("jitter_orientation_deg", c.jitter_orientation_deg);
        c.noise_sigma = kv.get_double_or("noise_sigma", c.noise_sigma);
        c.image_size = static_cast<int>(kv.get_int_or("image_size", c.image_size));
        c.seed = static_cast<uint64_t>(kv.get_int_or("seed", 0));
        return c;
    }
};

namespace dataset_detail {

// Fixed per-class scatterer layout; samples jitter around it.
inline std::vector<ScatteringCenter> class_template(const SynthConfig& cfg,
                                                    const RadarParams& radar, int cls) {
    Rng rng(mix_seed(cfg.seed, 0x74656d70, static_cast<uint64_t>(cls)));
    const double res = radar.spatial_resolution_m;
    const double extent = cfg.image_size * res / 6.0;
    const int count = cfg.min_scatterers +
                      static_cast<int>(rng.below(static_cast<uint64_t>(cfg.max_scatterers - cfg.min_scatterers + 1)));
    std::vector<ScatteringCenter> centers;
    for (int i = 0; i < count; ++i) {
        ScatteringCenter sc;
        sc.amplitude = rng.uniform(0.5, 1.5);
        sc.x_m = rng.uniform(-extent, extent);
        sc.y_m = rng.uniform(-extent, extent);
        if (rng.uniform() < 0.5) {
            // distributed: finite length, oriented, gamma = 0
            sc.length_m = res * rng.uniform(1.0, cfg.image_size / 8.0);
            sc.orientation_deg = rng.uniform(0.0, 90.0);
        }  // else localized: L = phi_bar = 0
        centers.push_back(sc);
    }
    return centers;
}

inline SarSample synth_sample(const SynthConfig& cfg, const FrequencyAspectGrid& grid,
                              const std::vector<ScatteringCenter>& tmpl, int cls, int index,
                              bool test) {
    Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(cls) + 1,
                     static_cast<uint64_t>(index) + 1, test ? 2 : 1));
    std::vector<ScatteringCenter> centers = tmpl;
    for (auto& sc : centers) {
        sc.amplitude = std::max(0.0, sc.amplitude + rng.normal(0.0, cfg.jitter_amplitude));
        sc.x_m += rng.normal(0.0, cfg.jitter_position_m);
        sc.y_m += rng.normal(0.0, cfg.jitter_position_m);
        if (sc.length_m > 0.0) {
            sc.length_m = std::max(0.0, sc.length_m + rng.normal(0.0, cfg.jitter_length_m));
            sc.orientation_deg += rng.normal(0.0, cfg.jitter_orientation_deg);
        }
    }
    ComplexMatrix spectrum = scene_spectrum(centers, grid, cfg.noise_sigma, rng);
    RealMatrix image = spectrum_to_image(spectrum);
    // center window of image_size pixels (crop_center requires odd sizes)
    SarSample s;
    const int n = image.rows;
    const int t = cfg.image_size;
    const int off = (n - 1) / 2 - (t - 1) / 2;
    s.magnitude = RealMatrix(t, t);
    for (int r = 0; r < t; ++r)
        for (int c = 0; c < t; ++c) s.magnitude(r, c) = image(r + off, c + off);
    s.label = "class" + std::to_string(cls);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s/%s%04d", s.label.c_str(), test ? "t" : "r", index);
    s.id = buf;
    s.metadata["split"] = test ? "test" : "train";
    return s;
}

}  // namespace dataset_detail

// Balanced labeled synthetic set: per class a fixed template perturbed
// per sample. Deterministic under cfg.seed; parallelizable per sample.
inline std::vector<SarSample> synth_dataset(const SynthConfig& cfg, const RadarParams& radar,
                                            int threads = 1) {
    cfg.validate(radar);
    FrequencyAspectGrid grid = make_radar_grid(radar);
    std::vector<std::vector<ScatteringCenter>> templates;
    for (int c = 0; c < cfg.n_classes; ++c)
        templates.push_back(dataset_detail::class_template(cfg, radar, c));
    const int per_class = cfg.train_per_class + cfg.test_per_class;
    const size_t total = static_cast<size_t>(cfg.n_classes) * per_class;
    std::vector<SarSample> out(total);
    parallel_for(total, threads, [&](size_t i) {
        const int cls = static_cast<int>(i) / per_class;
        const int j = static_cast<int>(i) % per_class;
        const bool test = j >= cfg.train_per_class;
        const int index = test ? j - cfg.train_per_class : j;
        out[i] = dataset_detail::synth_sample(cfg, grid, templates[static_cast<size_t>(cls)], cls,
                                              index, test);
    });
    return out;
}

// ============================================================
// Tensor files (.osrt) and directory I/O
// ============================================================

inline std::string encode_tensor_file(const Tensor& t) {
    std::string out;
    out.append("OSRT", 4);
    detail::put_u32(out, 1);
    out.push_back(static_cast<char>(t.rank()));
    for (int d : t.shape) detail::put_u32(out, static_cast<uint32_t>(d));
    for (double x : t.v) {
        uint64_t bits;
        std::memcpy(&bits, &x, 8);
        detail::put_u32(out, static_cast<uint32_t>(bits & 0xFFFFFFFFu));
        detail::put_u32(out, static_cast<uint32_t>(bits >> 32));
    }
    return out;
}

inline Tensor decode_tensor_file(const std::string& bytes) {
    if (bytes.size() < 9 || bytes.compare(0, 4, "OSRT") != 0)
        throw DataError("tensor file: bad magic");
    size_t pos = 4;
    uint32_t version = detail::get_u32(bytes, pos);
    if (version != 1) throw DataError("tensor file: unsupported version " + std::to_string(version));
    if (pos >= bytes.size()) throw DataError("tensor file truncated");
    int rank = static_cast<uint8_t>(bytes[pos++]);
    if (rank < 1 || rank > 4) throw DataError("tensor file: bad rank");
    std::vector<int> shape(static_cast<size_t>(rank));
    for (auto& d : shape) d = static_cast<int>(detail::get_u32(bytes, pos));
    Tensor t(shape);
    for (auto& x : t.v) {
        uint64_t lo = detail::get_u32(bytes, pos);
        uint64_t hi = detail::get_u32(bytes, pos);
        uint64_t bits = lo | (hi << 32);
        std::memcpy(&x, &bits, 8);
    }
    return t;
}

// Persists preprocessed samples as one tensor file each plus a manifest
// (path,label,split). Returns the manifest path.
inline std::string save_sample_dir(const std::string& dir, const std::vector<SarSample>& samples) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::string manifest = "path,label,split\n";
    int counter = 0;
    for (const auto& s : samples) {
        char name[32];
        std::snprintf(name, sizeof(name), "s%06d.osrt", counter++);
        Tensor t({s.magnitude.rows, s.magnitude.cols});
        t.v = s.magnitude.v;
        write_file_atomic(dir + "/" + name, encode_tensor_file(t));
        auto it = s.metadata.find("split");
        manifest += std::string(name) + "," + s.label + "," +
                    (it == s.metadata.end() ? "test" : it->second) + "\n";
    }
    std::string mpath = dir + "/manifest.csv";
    write_file_atomic(mpath, manifest);
    return mpath;
}

namespace dataset_detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline SarSample load_sample_file(const std::string& path, const std::string& id) {
    SarSample s;
    s.id = id;
    std::string bytes = read_file(path);
    std::string ext;
    size_t dot = path.rfind('.');
    if (dot != std::string::npos) ext = path.substr(dot);
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (ext == ".png") {
        s.magnitude = decode_png_gray(bytes);
    } else if (ext == ".osrt") {
        Tensor t = decode_tensor_file(bytes);
        int rows = t.rank() == 3 ? t.dim(1) : t.dim(0);
        int cols = t.rank() == 3 ? t.dim(2) : t.dim(t.rank() - 1);
        s.magnitude = RealMatrix(rows, cols);
        s.magnitude.v = t.v;
    } else {
        MstarFile m = parse_mstar_bytes(bytes);
        s.magnitude = std::move(m.magnitude);
        s.phase = std::move(m.phase);
        auto put_meta = [&](const char* key, const char* meta) {
            auto it = m.header.find(key);
            if (it != m.header.end()) s.metadata[meta] = it->second;
        };
        put_meta("TargetAz", "azimuth_deg");
        put_meta("DesiredDepression", "depression_deg");
        put_meta("TargetSerNum", "serial");
    }
    s.check();
    return s;
}

}  // namespace dataset_detail

// Single-file load with format sniffing by extension (.png, .osrt, else
// Phoenix format).
inline SarSample load_sample(const std::string& path, const std::string& id = "") {
    return dataset_detail::load_sample_file(path, id.empty() ? path : id);
}

// Loads every recognized file under root. With a manifest
// (path,label,split[,depression_deg,azimuth_deg]) the listed files are
// loaded with those labels; otherwise the immediate parent directory
// names the class and no split is assigned. Ordering is lexicographic by
// relative path. Unreadable files warn unless strict.
inline std::vector<SarSample> load_samples_dir(const std::string& root,
                                               const std::string& manifest_path = "",
                                               bool strict = false) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root);
    std::vector<SarSample> out;

    std::string manifest = manifest_path;
    if (manifest.empty() && fs::exists(root + "/manifest.csv")) manifest = root + "/manifest.csv";

    if (!manifest.empty()) {
        std::string text = read_file(manifest);
        std::istringstream in(text);
        std::string line;
        if (!std::getline(in, line)) throw DataError("manifest is empty: " + manifest);
        auto header = dataset_detail::split_csv_line(line);
        auto col = [&](const std::string& name) {
            for (size_t i = 0; i < header.size(); ++i)
                if (header[i] == name) return static_cast<int>(i);
            return -1;
        };
        const int c_path = col("path"), c_label = col("label"), c_split = col("split");
        const int c_dep = col("depression_deg"), c_az = col("azimuth_deg");
        if (c_path < 0 || c_label < 0)
            throw DataError("manifest must have 'path' and 'label' columns: " + manifest);
        while (std::getline(in, line)) {
            if (KvConfig::trim(line).empty()) continue;
            auto f = dataset_detail::split_csv_line(line);
            auto field = [&](int i) { return i >= 0 && i < static_cast<int>(f.size()) ? f[static_cast<size_t>(i)] : std::string(); };
            std::string rel = field(c_path);
            try {
                SarSample s = dataset_detail::load_sample_file(root + "/" + rel, rel);
                s.label = field(c_label);
                if (!field(c_split).empty()) s.metadata["split"] = field(c_split);
                if (!field(c_dep).empty()) s.metadata["depression_deg"] = field(c_dep);
                if (!field(c_az).empty()) s.metadata["azimuth_deg"] = field(c_az);
                out.push_back(std::move(s));
            } catch (const Error& e) {
                if (strict) throw;
                std::cerr << "warning: skipping " << rel << ": " << e.what() << "\n";
            }
        }
    } else {
        std::vector<fs::path> files;
        for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator(); ++it)
            if (it->is_regular_file()) files.push_back(it->path());
        std::sort(files.begin(), files.end());
        for (const auto& p : files) {
            std::string rel = fs::relative(p, root).string();
            try {
                SarSample s = dataset_detail::load_sample_file(p.string(), rel);
                s.label = p.parent_path().filename().string();
                out.push_back(std::move(s));
            } catch (const Error& e) {
                if (strict) throw;
                std::cerr << "warning: skipping " << rel << ": " << e.what() << "\n";
            }
        }
    }
    if (out.empty()) throw DataError("no loadable samples under " + root);
    return out;
}

}  // namespace osrk
