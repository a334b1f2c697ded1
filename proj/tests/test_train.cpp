#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "osrk/train.hpp"

using namespace osrk;

namespace {

// input 8x8 -> conv 3x3x4 -> pool -> dense 16 -> dense 8
NetworkConfig micro_config() {
    NetworkConfig c;
    c.input_size = 8;
    c.embedding_dim = 8;
    c.layers = {
        {LayerSpec::Kind::conv, 3, 4, 1, 1, 0},
        {LayerSpec::Kind::pool, 2, 0, 2, 0, 0},
        {LayerSpec::Kind::dense, 0, 0, 1, 0, 16},
        {LayerSpec::Kind::dense, 0, 0, 1, 0, 8},
    };
    return c;
}

// Two well-separated blob classes.
void make_blobs(int per_class, std::vector<Tensor>& images, std::vector<int>& labels,
                uint64_t seed) {
    Rng rng(seed);
    for (int cls = 0; cls < 2; ++cls) {
        for (int i = 0; i < per_class; ++i) {
            Tensor img({1, 8, 8});
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    bool hot = cls == 0 ? (x < 4) : (x >= 4);
                    img.v[static_cast<size_t>(y) * 8 + x] =
                        (hot ? 1.0 : 0.0) + rng.uniform(-0.05, 0.05);
                }
            images.push_back(std::move(img));
            labels.push_back(cls);
        }
    }
}

}  // namespace

TEST_CASE("sgd step arithmetic") {
    SUBCASE("single step without momentum") {
        Tensor p({1});
        p.requires_grad();
        p.g[0] = 1.0;
        Tensor v;
        sgd_step(p, v, 0.1, 0.0);
        CHECK(p.v[0] == doctest::Approx(-0.1).epsilon(1e-15));
    }
    SUBCASE("zero gradient and zero velocity leave the parameter alone") {
        Tensor p({1});
        p.v[0] = 3.0;
        p.requires_grad();
        Tensor v;
        sgd_step(p, v, 0.5, 0.9);
        CHECK(p.v[0] == 3.0);
    }
    SUBCASE("momentum accumulates across steps") {
        Tensor p({1});
        p.requires_grad();
        p.g[0] = 1.0;
        Tensor v;
        sgd_step(p, v, 1.0, 0.9);
        p.g[0] = 1.0;
        sgd_step(p, v, 1.0, 0.9);
        CHECK(p.v[0] == doctest::Approx(-2.9).epsilon(1e-15));
    }
    SUBCASE("mismatched velocity is rejected") {
        Tensor p({2});
        p.requires_grad();
        Tensor v({3});
        CHECK_THROWS_AS(sgd_step(p, v, 0.1, 0.9), ShapeError);
    }
}

TEST_CASE("separable two-class toy run drives the loss below log 2") {
    std::vector<Tensor> images;
    std::vector<int> labels;
    make_blobs(10, images, labels, 5);
    Network net = build_network(micro_config(), 7);
    RplHead head(2, 8, 7);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.01;
    cfg.lambda = 0.0;
    cfg.seed = 7;
    TrainState state = TrainState::fresh(cfg.seed);
    auto log = fit(net, head, images, labels, cfg, state);
    REQUIRE(log.size() == 10);
    CHECK(log.back().classification < std::log(2.0));
}

TEST_CASE("with lambda zero the radius never moves") {
    std::vector<Tensor> images;
    std::vector<int> labels;
    make_blobs(6, images, labels, 9);
    Network net = build_network(micro_config(), 3);
    RplHead head(2, 8, 3);
    const double r0 = head.radius.v[0];
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.lambda = 0.0;
    TrainState state = TrainState::fresh(0);
    fit(net, head, images, labels, cfg, state);
    CHECK(head.radius.v[0] == r0);
}

TEST_CASE("radius stays non-negative under aggressive updates") {
    std::vector<Tensor> images;
    std::vector<int> labels;
    make_blobs(6, images, labels, 11);
    Network net = build_network(micro_config(), 4);
    RplHead head(2, 8, 4);
    head.radius.v[0] = 0.01;
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 4;
    cfg.lambda = 5.0;
    cfg.learning_rate = 0.5;
    cfg.clip_norm = 10.0;
    TrainState state = TrainState::fresh(1);
    fit(net, head, images, labels, cfg, state);
    CHECK(head.radius.v[0] >= 0.0);
}

TEST_CASE("overfit sanity: fixed 8-sample batch collapses the loss") {
    std::vector<Tensor> images;
    std::vector<int> labels;
    make_blobs(4, images, labels, 21);  // 8 samples total
    Network net = build_network(micro_config(), 13);
    RplHead head(2, 8, 13);
    TrainConfig cfg;
    cfg.epochs = 500;  // batch = dataset, so one step per epoch
    cfg.batch_size = 8;
    cfg.learning_rate = 0.01;
    cfg.lambda = 0.1;
    cfg.gamma = 1.0;
    TrainState state = TrainState::fresh(2);
    auto log = fit(net, head, images, labels, cfg, state);
    CHECK(log.back().total < 0.1);
}

TEST_CASE("identical seeds give bit-identical loss trajectories") {
    for (int run = 0; run < 1; ++run) {
        std::vector<Tensor> images;
        std::vector<int> labels;
        make_blobs(8, images, labels, 31);
        auto once = [&](uint64_t seed) {
            Network net = build_network(micro_config(), seed);
            RplHead head(2, 8, seed);
            TrainConfig cfg;
            cfg.epochs = 4;
            cfg.batch_size = 4;
            cfg.seed = seed;
            TrainState state = TrainState::fresh(seed);
            return fit(net, head, images, labels, cfg, state);
        };
        auto a = once(12);
        auto b = once(12);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].total == b[i].total);
            CHECK(a[i].classification == b[i].classification);
            CHECK(a[i].boundary == b[i].boundary);
        }
    }
}

TEST_CASE("checkpoint encode/decode round trip is byte-stable") {
    std::vector<Tensor> images;
    std::vector<int> labels;
    make_blobs(4, images, labels, 41);
    NetworkConfig ncfg = micro_config();
    Network net = build_network(ncfg, 5);
    RplHead head(2, 8, 5);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    TrainState state = TrainState::fresh(3);
    fit(net, head, images, labels, cfg, state);

    Checkpoint c = make_checkpoint(net, head, state, ncfg.to_kv().serialize());
    std::string bytes = encode_checkpoint(c);
    Checkpoint d = decode_checkpoint(bytes);
    std::string bytes2 = encode_checkpoint(d);
    CHECK(bytes == bytes2);

    SUBCASE("truncation is detected") {
        std::string cut = bytes.substr(0, bytes.size() / 2);
        try {
            decode_checkpoint(cut);
            FAIL("expected CheckpointError");
        } catch (const CheckpointError& e) {
            // a mid-file cut lands either on the checksum or a short read
            CHECK((e.kind == CheckpointError::Kind::truncated ||
                   e.kind == CheckpointError::Kind::checksum_mismatch));
        }
    }
    SUBCASE("flipped payload byte fails the checksum") {
        std::string bad = bytes;
        bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 0x5A);
        try {
            decode_checkpoint(bad);
            FAIL("expected CheckpointError");
        } catch (const CheckpointError& e) {
            CHECK(e.kind == CheckpointError::Kind::checksum_mismatch);
        }
    }
    SUBCASE("version bump is its own error kind") {
        std::string bad = bytes;
        bad[4] = 2;  // version field
        // restore checksum so only the version differs
        uint32_t crc = crc32_of(bad.data(), bad.size() - 4);
        for (int i = 0; i < 4; ++i)
            bad[bad.size() - 4 + static_cast<size_t>(i)] = static_cast<char>((crc >> (8 * i)) & 0xFF);
        try {
            decode_checkpoint(bad);
            FAIL("expected CheckpointError");
        } catch (const CheckpointError& e) {
            CHECK(e.kind == CheckpointError::Kind::version_mismatch);
        }
    }
}

TEST_CASE("resume reproduces the uninterrupted trajectory bit-exactly") {
    std::vector<Tensor> images;
    std::vector<int> labels;
    make_blobs(8, images, labels, 51);
    NetworkConfig ncfg = micro_config();

    // straight 4-epoch run
    Network net_a = build_network(ncfg, 9);
    RplHead head_a(2, 8, 9);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 4;
    TrainState state_a = TrainState::fresh(4);
    auto log_a = fit(net_a, head_a, images, labels, cfg, state_a);

    // 2 epochs, checkpoint, restore, 2 more
    Network net_b = build_network(ncfg, 9);
    RplHead head_b(2, 8, 9);
    TrainConfig cfg2 = cfg;
    cfg2.epochs = 2;
    TrainState state_b = TrainState::fresh(4);
    auto log_b1 = fit(net_b, head_b, images, labels, cfg2, state_b);

    Checkpoint c = make_checkpoint(net_b, head_b, state_b, ncfg.to_kv().serialize());
    RestoredRun run = restore_checkpoint(decode_checkpoint(encode_checkpoint(c)));
    CHECK(run.state.epochs_done == 2);
    auto log_b2 = fit(run.net, run.head, images, labels, cfg, run.state);

    REQUIRE(log_a.size() == 4);
    REQUIRE(log_b1.size() == 2);
    REQUIRE(log_b2.size() == 2);
    for (int i = 0; i < 2; ++i) {
        CHECK(log_a[i].total == log_b1[i].total);
        CHECK(log_a[i + 2].total == log_b2[i].total);
        CHECK(log_a[i + 2].classification == log_b2[i].classification);
        CHECK(log_a[i + 2].boundary == log_b2[i].boundary);
    }
    // final parameters identical too
    auto pa = net_a.params();
    auto pb = run.net.params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i)
        for (size_t j = 0; j < pa[i].second->v.size(); ++j)
            CHECK(pa[i].second->v[j] == pb[i].second->v[j]);
    for (size_t j = 0; j < head_a.points.v.size(); ++j)
        CHECK(head_a.points.v[j] == run.head.points.v[j]);
    CHECK(head_a.radius.v[0] == run.head.radius.v[0]);
}

TEST_CASE("label range and empty dataset are rejected") {
    Network net = build_network(micro_config(), 1);
    RplHead head(2, 8, 1);
    TrainConfig cfg;
    TrainState state = TrainState::fresh(0);
    std::vector<Tensor> none;
    std::vector<int> nolabels;
    CHECK_THROWS_AS(fit(net, head, none, nolabels, cfg, state), ArgumentError);
    std::vector<Tensor> one;
    one.emplace_back(std::vector<int>{1, 8, 8});
    CHECK_THROWS_AS(fit(net, head, one, {5}, cfg, state), ArgumentError);
}
