#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstring>
#include <filesystem>

#include "osrk/dataset.hpp"

using namespace osrk;
namespace fs = std::filesystem;

namespace {

// Test-side Phoenix encoder, independent of the parser.
std::string encode_mstar(int rows, int cols, const std::vector<float>& mag,
                         const std::vector<float>& phase,
                         const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    std::string out;
    out += "[PhoenixHeaderVer 1.05]\n";
    out += "NumberOfColumns= " + std::to_string(cols) + "\n";
    out += "NumberOfRows= " + std::to_string(rows) + "\n";
    for (auto& [k, v] : extra) out += k + "= " + v + "\n";
    out += "[EndofPhoenixHeader]\n";
    auto put_be = [&](float f) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        out.push_back(static_cast<char>((bits >> 24) & 0xFF));
        out.push_back(static_cast<char>((bits >> 16) & 0xFF));
        out.push_back(static_cast<char>((bits >> 8) & 0xFF));
        out.push_back(static_cast<char>(bits & 0xFF));
    };
    for (float f : mag) put_be(f);
    for (float f : phase) put_be(f);
    return out;
}

std::string fresh_dir(const char* tag) {
    static int counter = 0;
    std::string dir = (fs::temp_directory_path() / (std::string("osrk_") + tag + "_" +
                                                    std::to_string(::getpid()) + "_" +
                                                    std::to_string(counter++))).string();
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("phoenix parser round-trips a synthetic fixture") {
    std::vector<float> mag(16), phase(16);
    for (int i = 0; i < 16; ++i) {
        mag[static_cast<size_t>(i)] = static_cast<float>(i) * 0.5f;
        phase[static_cast<size_t>(i)] = static_cast<float>(i) - 8.0f;
    }
    std::string bytes = encode_mstar(4, 4, mag, phase,
                                     {{"TargetAz", "33.02"}, {"DesiredDepression", "17"}});
    MstarFile f = parse_mstar_bytes(bytes);
    CHECK(f.rows == 4);
    CHECK(f.cols == 4);
    for (int i = 0; i < 16; ++i) {
        CHECK(f.magnitude.v[static_cast<size_t>(i)] == static_cast<double>(mag[static_cast<size_t>(i)]));
        CHECK(f.phase.v[static_cast<size_t>(i)] == static_cast<double>(phase[static_cast<size_t>(i)]));
    }
    CHECK(f.header.at("TargetAz") == "33.02");
    CHECK(f.header.at("DesiredDepression") == "17");
}

TEST_CASE("phoenix parser error taxonomy") {
    std::vector<float> mag(16, 0.0f), phase(16, 0.0f);
    SUBCASE("short payload reports the expected byte count") {
        std::string bytes = encode_mstar(4, 4, mag, phase);
        bytes.resize(bytes.size() - 10);
        try {
            parse_mstar_bytes(bytes);
            FAIL("expected MstarParseError");
        } catch (const MstarParseError& e) {
            CHECK(e.kind == MstarParseError::Kind::payload_size_mismatch);
            CHECK(e.offset > 0);
            CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
        }
    }
    SUBCASE("missing terminator") {
        std::string bytes = "[PhoenixHeaderVer 1.05]\nNumberOfRows= 4\n";
        try {
            parse_mstar_bytes(bytes);
            FAIL("expected MstarParseError");
        } catch (const MstarParseError& e) {
            CHECK(e.kind == MstarParseError::Kind::missing_terminator);
        }
    }
    SUBCASE("missing dimension keys") {
        std::string bytes = "[PhoenixHeaderVer 1.05]\nNumberOfRows= 4\n[EndofPhoenixHeader]\n";
        try {
            parse_mstar_bytes(bytes);
            FAIL("expected MstarParseError");
        } catch (const MstarParseError& e) {
            CHECK(e.kind == MstarParseError::Kind::missing_key);
        }
    }
    SUBCASE("no header at all") {
        CHECK_THROWS_AS(parse_mstar_bytes("not a phoenix file"), MstarParseError);
    }
    SUBCASE("zero payload with declared dimensions still parses when sizes agree") {
        std::string bytes = encode_mstar(16, 16, std::vector<float>(256, 0.0f),
                                         std::vector<float>(256, 0.0f));
        MstarFile f = parse_mstar_bytes(bytes);
        for (double v : f.magnitude.v) CHECK(v == 0.0);
    }
}

TEST_CASE("png write/read round trip") {
    RealMatrix img(5, 7);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 7; ++c) img(r, c) = (r * 7 + c) % 256;
    std::string bytes = encode_png_gray8(img);
    RealMatrix back = decode_png_gray(bytes);
    REQUIRE(back.rows == 5);
    REQUIRE(back.cols == 7);
    for (size_t i = 0; i < img.v.size(); ++i) CHECK(back.v[i] == img.v[i]);
}

TEST_CASE("png reader accepts 16-bit grayscale") {
    // hand-built 2x2 16-bit image
    const int w = 2, h = 2;
    std::string raw;
    uint16_t vals[4] = {0, 1000, 40000, 65535};
    for (int r = 0; r < h; ++r) {
        raw.push_back(0);
        for (int c = 0; c < w; ++c) {
            uint16_t v = vals[r * w + c];
            raw.push_back(static_cast<char>((v >> 8) & 0xFF));
            raw.push_back(static_cast<char>(v & 0xFF));
        }
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::string packed(bound, '\0');
    REQUIRE(compress2(reinterpret_cast<Bytef*>(packed.data()), &bound,
                      reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                      9) == Z_OK);
    packed.resize(bound);

    std::string png("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    png_detail::put_u32be(ihdr, w);
    png_detail::put_u32be(ihdr, h);
    ihdr += std::string("\x10\x00\x00\x00\x00", 5);  // depth 16, gray
    png_detail::put_chunk(png, "IHDR", ihdr);
    png_detail::put_chunk(png, "IDAT", packed);
    png_detail::put_chunk(png, "IEND", "");

    RealMatrix img = decode_png_gray(png);
    CHECK(img(0, 0) == 0.0);
    CHECK(img(0, 1) == 1000.0);
    CHECK(img(1, 0) == 40000.0);
    CHECK(img(1, 1) == 65535.0);
}

TEST_CASE("png reader rejects color images") {
    RealMatrix img(3, 3);
    std::string bytes = encode_png_gray8(img);
    bytes[8 + 8 + 9] = 2;  // IHDR color type -> truecolor
    CHECK_THROWS_AS(decode_png_gray(bytes), DataError);
}

TEST_CASE("preprocess geometry and scaling") {
    SUBCASE("pad 128 to 227 keeps the center pixel centered") {
        SarSample s;
        s.magnitude = RealMatrix(128, 128);
        s.magnitude(63, 63) = 5.0;
        Tensor t = preprocess(s, 227, ResizeMode::pad);
        CHECK(t.shape == std::vector<int>({1, 227, 227}));
        CHECK(t.v[static_cast<size_t>(113) * 227 + 113] == 1.0);  // scaled by max
        double sum = 0.0;
        for (double v : t.v) sum += v;
        CHECK(sum == 1.0);
    }
    SUBCASE("equal size only rescales") {
        SarSample s;
        s.magnitude = RealMatrix(4, 4);
        for (size_t i = 0; i < 16; ++i) s.magnitude.v[i] = static_cast<double>(i);
        Tensor t = preprocess(s, 4, ResizeMode::pad);
        for (size_t i = 0; i < 16; ++i) CHECK(t.v[i] == static_cast<double>(i) / 15.0);
    }
    SUBCASE("constant positive image becomes all ones") {
        SarSample s;
        s.magnitude = RealMatrix(8, 8);
        for (auto& v : s.magnitude.v) v = 3.25;
        Tensor t = preprocess(s, 8, ResizeMode::center_crop);
        for (double v : t.v) CHECK(v == 1.0);
    }
    SUBCASE("all-zero passes through as zeros") {
        SarSample s;
        s.magnitude = RealMatrix(8, 8);
        Tensor t = preprocess(s, 12, ResizeMode::pad);
        for (double v : t.v) CHECK(v == 0.0);
    }
    SUBCASE("center_crop cannot grow") {
        SarSample s;
        s.magnitude = RealMatrix(8, 8);
        CHECK_THROWS_AS(preprocess(s, 12, ResizeMode::center_crop), ConfigError);
    }
    SUBCASE("crop picks the centered window") {
        SarSample s;
        s.magnitude = RealMatrix(9, 9);
        s.magnitude(4, 4) = 2.0;
        Tensor t = preprocess(s, 3, ResizeMode::center_crop);
        CHECK(t.v[4] == 1.0);  // center of the 3x3
    }
}

TEST_CASE("synthetic dataset generation") {
    RadarParams radar = RadarParams::desk_profile(32, 4);
    SynthConfig cfg;
    cfg.n_classes = 3;
    cfg.train_per_class = 4;
    cfg.test_per_class = 2;
    cfg.image_size = 16;
    cfg.noise_sigma = 0.0;
    cfg.seed = 7;

    SUBCASE("balance and determinism") {
        auto samples = synth_dataset(cfg, radar);
        REQUIRE(samples.size() == 18);
        std::map<std::string, int> train_count, test_count;
        for (const auto& s : samples) {
            if (s.metadata.at("split") == "train")
                train_count[s.label]++;
            else
                test_count[s.label]++;
            for (double v : s.magnitude.v) {
                CHECK(std::isfinite(v));
                CHECK(v >= 0.0);
            }
        }
        for (auto& [cls, n] : train_count) CHECK(n == 4);
        for (auto& [cls, n] : test_count) CHECK(n == 2);

        auto again = synth_dataset(cfg, radar);
        for (size_t i = 0; i < samples.size(); ++i)
            for (size_t j = 0; j < samples[i].magnitude.v.size(); ++j)
                CHECK(samples[i].magnitude.v[j] == again[i].magnitude.v[j]);

        auto parallel = synth_dataset(cfg, radar, 4);
        for (size_t i = 0; i < samples.size(); ++i)
            for (size_t j = 0; j < samples[i].magnitude.v.size(); ++j)
                CHECK(samples[i].magnitude.v[j] == parallel[i].magnitude.v[j]);
    }
    SUBCASE("zero jitter and zero noise collapse each class to one image") {
        SynthConfig frozen = cfg;
        frozen.jitter_amplitude = 0.0;
        frozen.jitter_position_m = 0.0;
        frozen.jitter_length_m = 0.0;
        frozen.jitter_orientation_deg = 0.0;
        auto samples = synth_dataset(frozen, radar);
        for (const auto& a : samples)
            for (const auto& b : samples)
                if (a.label == b.label)
                    for (size_t j = 0; j < a.magnitude.v.size(); ++j)
                        CHECK(a.magnitude.v[j] == b.magnitude.v[j]);
    }
    SUBCASE("one rotated scatterer separates two class templates") {
        FrequencyAspectGrid grid = make_radar_grid(radar);
        std::vector<ScatteringCenter> a(2), b(2);
        a[0].x_m = b[0].x_m = 0.5;
        a[0].amplitude = b[0].amplitude = 1.0;
        a[1].length_m = b[1].length_m = 0.9;
        a[1].orientation_deg = 10.0;
        b[1].orientation_deg = 55.0;
        Rng rng(1);
        RealMatrix ia = spectrum_to_image(scene_spectrum(a, grid, 0.0, rng));
        RealMatrix ib = spectrum_to_image(scene_spectrum(b, grid, 0.0, rng));
        double l1 = 0.0;
        for (size_t i = 0; i < ia.v.size(); ++i) l1 += std::abs(ia.v[i] - ib.v[i]);
        CHECK(l1 / static_cast<double>(ia.v.size()) > 0.0);
    }
    SUBCASE("image size larger than the grid is rejected") {
        SynthConfig bad = cfg;
        bad.image_size = 64;
        CHECK_THROWS_AS(synth_dataset(bad, radar), ConfigError);
    }
}

TEST_CASE("sample directory round trip") {
    RadarParams radar = RadarParams::desk_profile(32, 4);
    SynthConfig cfg;
    cfg.n_classes = 2;
    cfg.train_per_class = 2;
    cfg.test_per_class = 1;
    cfg.image_size = 16;
    cfg.seed = 3;
    auto samples = synth_dataset(cfg, radar);
    std::string dir = fresh_dir("synthdir");
    save_sample_dir(dir, samples);
    auto loaded = load_samples_dir(dir);
    REQUIRE(loaded.size() == samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK(loaded[i].label == samples[i].label);
        CHECK(loaded[i].metadata.at("split") == samples[i].metadata.at("split"));
        for (size_t j = 0; j < samples[i].magnitude.v.size(); ++j)
            CHECK(loaded[i].magnitude.v[j] == samples[i].magnitude.v[j]);
    }
    fs::remove_all(dir);
}

TEST_CASE("directory loading with labels from folders and manifest override") {
    std::string dir = fresh_dir("pngdir");
    fs::create_directories(dir + "/alpha");
    fs::create_directories(dir + "/beta");
    RealMatrix img(4, 4);
    img(1, 2) = 200.0;
    for (int i = 0; i < 3; ++i)
        write_file_atomic(dir + "/alpha/a" + std::to_string(i) + ".png", encode_png_gray8(img));
    for (int i = 0; i < 2; ++i)
        write_file_atomic(dir + "/beta/b" + std::to_string(i) + ".png", encode_png_gray8(img));

    SUBCASE("folder names label the classes") {
        auto samples = load_samples_dir(dir);
        REQUIRE(samples.size() == 5);
        int alpha = 0, beta = 0;
        for (const auto& s : samples) {
            if (s.label == "alpha") alpha++;
            if (s.label == "beta") beta++;
        }
        CHECK(alpha == 3);
        CHECK(beta == 2);
        // lexicographic by relative path
        CHECK(samples[0].id == "alpha/a0.png");
    }
    SUBCASE("manifest overrides labels and assigns splits") {
        std::string manifest = "path,label,split,depression_deg\n";
        manifest += "alpha/a0.png,tank,train,17\n";
        manifest += "alpha/a1.png,tank,test,15\n";
        manifest += "beta/b0.png,truck,test,15\n";
        write_file_atomic(dir + "/files.csv", manifest);
        auto samples = load_samples_dir(dir, dir + "/files.csv");
        REQUIRE(samples.size() == 3);
        CHECK(samples[0].label == "tank");
        CHECK(samples[0].metadata.at("split") == "train");
        CHECK(samples[2].label == "truck");
        CHECK(samples[2].metadata.at("depression_deg") == "15");
    }
    SUBCASE("mixed formats load together") {
        std::vector<float> mag(16, 1.0f), phase(16, 0.0f);
        write_file_atomic(dir + "/alpha/c0.dat", encode_mstar(4, 4, mag, phase));
        auto samples = load_samples_dir(dir);
        CHECK(samples.size() == 6);
    }
    fs::remove_all(dir);
}

TEST_CASE("soc split") {
    auto make = [](const std::string& label, double dep) {
        SarSample s;
        s.magnitude = RealMatrix(4, 4);
        s.label = label;
        s.id = label + "@" + std::to_string(dep);
        s.metadata["depression_deg"] = std::to_string(dep);
        return s;
    };
    SUBCASE("depression-tagged samples partition by angle") {
        std::vector<SarSample> samples;
        for (int i = 0; i < 3; ++i) samples.push_back(make("a", 17.0));
        for (int i = 0; i < 2; ++i) samples.push_back(make("a", 15.0));
        for (int i = 0; i < 2; ++i) samples.push_back(make("u", 17.0));
        for (int i = 0; i < 2; ++i) samples.push_back(make("u", 15.0));
        samples.push_back(make("b", 17.0));
        samples.push_back(make("b", 15.0));
        SocSplit split = make_soc_split(samples, {"a", "b"}, {"u"});
        CHECK(split.train_indices.size() == 4);  // 3 a@17 + 1 b@17
        CHECK(split.test_indices.size() == 5);   // 2 a@15 + 2 u@15 + 1 b@15
        for (size_t i : split.test_indices) CHECK(samples[i].metadata.at("split") == "test");
        for (size_t i : split.train_indices) CHECK(samples[i].label != "u");
    }
    SUBCASE("stratified fallback keeps unknowns out of training") {
        std::vector<SarSample> samples;
        for (int i = 0; i < 10; ++i) {
            SarSample s;
            s.magnitude = RealMatrix(4, 4);
            s.label = i < 6 ? "k" : "u";
            s.id = "s" + std::to_string(i);
            samples.push_back(s);
        }
        SocSplit split = make_soc_split(samples, {"k"}, {"u"}, 0.5, 11);
        for (size_t i : split.train_indices) CHECK(samples[i].label == "k");
        size_t u_test = 0;
        for (size_t i : split.test_indices)
            if (samples[i].label == "u") u_test++;
        CHECK(u_test == 2);  // half of the four unknowns; the rest unused
        auto samples2 = samples;
        SocSplit split2 = make_soc_split(samples2, {"k"}, {"u"}, 0.5, 11);
        CHECK(split.train_indices == split2.train_indices);
        CHECK(split.test_indices == split2.test_indices);
    }
    SUBCASE("known/unknown overlap is rejected") {
        std::vector<SarSample> samples = {make("a", 17.0)};
        CHECK_THROWS_AS(make_soc_split(samples, {"a"}, {"a"}), ConfigError);
    }
    SUBCASE("absent class is rejected") {
        std::vector<SarSample> samples = {make("a", 17.0)};
        CHECK_THROWS_AS(make_soc_split(samples, {"a", "zz"}, {}), ConfigError);
    }
}

TEST_CASE("dataset assembly maps labels and keeps unknowns in test only") {
    std::vector<SarSample> samples;
    for (int i = 0; i < 8; ++i) {
        SarSample s;
        s.magnitude = RealMatrix(8, 8);
        s.magnitude(i % 8, 0) = 1.0;
        s.label = i < 3 ? "a" : (i < 6 ? "b" : "mystery");
        s.id = "s" + std::to_string(i);
        s.metadata["split"] = (i % 3 == 0) ? "train" : "test";
        samples.push_back(s);
    }
    Dataset d = build_dataset(samples, {"a", "b"}, 8);
    for (int y : d.train.labels) CHECK(y != kUnknown);
    CHECK(d.train.size() == 2);  // the train-tagged mystery sample is dropped
    int unknowns = 0;
    for (int y : d.test.labels)
        if (y == kUnknown) unknowns++;
    CHECK(unknowns == 1);
    CHECK(d.label_of("a") == 0);
    CHECK(d.label_of("b") == 1);
    CHECK(d.label_of("mystery") == kUnknown);
}
