#pragma once

// Training loop: mini-batch SGD with momentum jointly over network
// parameters, reciprocal points and the boundary radius. Deterministic
// under seed (Fisher-Yates shuffles from an owned RNG stream), with a
// lossless binary checkpoint carrying parameters, optimizer state and
// the RNG so a resumed run continues the exact trajectory.

#include <array>
#include <cstring>
#include <string>
#include <vector>

#include "osrk/kv_config.hpp"
#include "osrk/network.hpp"
#include "osrk/rpl.hpp"

namespace osrk {

struct TrainConfig {
    int epochs = 50;
    double learning_rate = 0.001;
    int batch_size = 64;
    double lambda = 0.1;
    double gamma = 1.0;
    double momentum = 0.9;
    uint64_t seed = 0;
    bool deterministic = true;
    double clip_norm = 0.0;  // 0 disables the emergency gradient clip

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (learning_rate <= 0) throw ConfigError("train: learning_rate must be > 0");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (lambda < 0) throw ConfigError("train: lambda must be >= 0");
        if (gamma <= 0) throw ConfigError("train: gamma must be > 0");
        if (momentum < 0 || momentum >= 1) throw ConfigError("train: momentum must be in [0,1)");
        if (clip_norm < 0) throw ConfigError("train: clip_norm must be >= 0");
    }

    static TrainConfig from_kv(const KvConfig& kv) {
        TrainConfig c;
        c.epochs = static_cast<int>(kv.get_int_or("epochs", c.epochs));
        c.learning_rate = kv.get_double_or("learning_rate", c.learning_rate);
        c.batch_size = static_cast<int>(kv.get_int_or("batch_size", c.batch_size));
        c.lambda = kv.get_double_or("lambda", c.lambda);
        c.gamma = kv.get_double_or("gamma", c.gamma);
        c.momentum = kv.get_double_or("momentum", c.momentum);
        c.seed = static_cast<uint64_t>(kv.get_int_or("seed", 0));
        c.deterministic = kv.get_bool_or("deterministic", true);
        c.clip_norm = kv.get_double_or("clip_norm", 0.0);
        c.validate();
        return c;
    }
};

// ============================================================
// SGD with momentum
// ============================================================

// v <- momentum * v + g ; p <- p - lr * v
inline void sgd_step(Tensor& param, Tensor& velocity, double lr, double momentum) {
    if (!velocity.same_shape(param)) {
        if (velocity.v.empty()) {
            velocity = Tensor(param.shape);
        } else {
            throw ShapeError("sgd_step: velocity " + velocity.shape_str() + " vs param " +
                             param.shape_str());
        }
    }
    for (size_t i = 0; i < param.v.size(); ++i) {
        velocity.v[i] = momentum * velocity.v[i] + param.g[i];
        param.v[i] -= lr * velocity.v[i];
    }
}

struct TrainState {
    int epochs_done = 0;
    Rng rng;
    std::vector<Tensor> net_velocity;   // aligned with trainable_params()
    std::vector<Tensor> head_velocity;  // [points, radius]

    static TrainState fresh(uint64_t seed) {
        TrainState s;
        s.rng = Rng(mix_seed(seed, 0x73687566));
        return s;
    }
};

struct EpochLog {
    int epoch = 0;
    double total = 0.0;
    double classification = 0.0;
    double boundary = 0.0;
};

// ============================================================
// Batch backprop
// ============================================================

// Forward+backward for one mini-batch (mean reduction). Accumulates into
// net parameter grads and head grads; caller zeroes grads beforehand.
inline LossValue backprop_batch(Network& net, RplHead& head,
                                const std::vector<const Tensor*>& samples,
                                const std::vector<int>& labels) {
    const int b = static_cast<int>(samples.size());
    if (b == 0) throw ArgumentError("backprop_batch: empty batch");
    const double inv_b = 1.0 / b;
    LossValue sum;
    Tensor frow({1, head.dim()});
    for (int i = 0; i < b; ++i) {
        Tensor emb = net.forward(*samples[static_cast<size_t>(i)], true);
        std::copy(emb.v.begin(), emb.v.end(), frow.v.begin());
        Tensor gf(frow.shape);
        LossValue lv = loss_total(frow, {labels[static_cast<size_t>(i)]}, head, &gf);
        sum.total += lv.total;
        sum.classification += lv.classification;
        sum.boundary += lv.boundary;
        Tensor demb({head.dim()});
        for (int j = 0; j < head.dim(); ++j) demb.v[static_cast<size_t>(j)] = gf.v[static_cast<size_t>(j)] * inv_b;
        net.backward(demb);
    }
    // head grads accumulated per-sample at weight 1; rescale to the mean
    for (auto& g : head.points.g) g *= inv_b;
    head.radius.g[0] *= inv_b;
    sum.total *= inv_b;
    sum.classification *= inv_b;
    sum.boundary *= inv_b;
    return sum;
}

// ============================================================
// fit
// ============================================================

inline std::vector<EpochLog> fit(Network& net, RplHead& head, const std::vector<Tensor>& images,
                                 const std::vector<int>& labels, const TrainConfig& cfg,
                                 TrainState& state) {
    cfg.validate();
    if (images.empty()) throw ArgumentError("fit: dataset is empty");
    if (images.size() != labels.size())
        throw ArgumentError("fit: image/label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= head.n_classes())
            throw ArgumentError("fit: label " + std::to_string(y) + " outside [0," +
                                std::to_string(head.n_classes()) + ")");
    head.lambda = cfg.lambda;
    head.gamma = cfg.gamma;

    auto net_params = net.trainable_params();
    state.net_velocity.resize(net_params.size());
    state.head_velocity.resize(2);

    std::vector<size_t> order(images.size());
    std::vector<EpochLog> log;
    for (int epoch = state.epochs_done; epoch < cfg.epochs; ++epoch) {
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        state.rng.shuffle(order);
        EpochLog el;
        el.epoch = epoch;
        size_t seen = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<const Tensor*> batch;
            std::vector<int> ylab;
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) {
                batch.push_back(&images[order[i]]);
                ylab.push_back(labels[order[i]]);
            }
            net.zero_grads();
            head.points.zero_grad();
            head.radius.zero_grad();
            LossValue lv = backprop_batch(net, head, batch, ylab);
            if (!std::isfinite(lv.total))
                throw NumericalError("fit: non-finite loss at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(start / cfg.batch_size));
            if (cfg.clip_norm > 0.0) {
                double norm2 = 0.0;
                for (auto& [name, t] : net_params)
                    for (double g : t->g) norm2 += g * g;
                for (double g : head.points.g) norm2 += g * g;
                norm2 += head.radius.g[0] * head.radius.g[0];
                double norm = std::sqrt(norm2);
                if (norm > cfg.clip_norm) {
                    double scale = cfg.clip_norm / norm;
                    for (auto& [name, t] : net_params)
                        for (double& g : t->g) g *= scale;
                    for (double& g : head.points.g) g *= scale;
                    head.radius.g[0] *= scale;
                }
            }
            for (size_t p = 0; p < net_params.size(); ++p)
                sgd_step(*net_params[p].second, state.net_velocity[p], cfg.learning_rate,
                         cfg.momentum);
            sgd_step(head.points, state.head_velocity[0], cfg.learning_rate, cfg.momentum);
            sgd_step(head.radius, state.head_velocity[1], cfg.learning_rate, cfg.momentum);
            head.clamp_radius();

            const double w = static_cast<double>(end - start);
            el.total += lv.total * w;
            el.classification += lv.classification * w;
            el.boundary += lv.boundary * w;
            seen += end - start;
        }
        el.total /= static_cast<double>(seen);
        el.classification /= static_cast<double>(seen);
        el.boundary /= static_cast<double>(seen);
        log.push_back(el);
        state.epochs_done = epoch + 1;
    }
    return log;
}

// ============================================================
// Checkpoint
// ============================================================
// Little-endian: magic "OSRK", version u32=1, config echo (u32 length +
// UTF-8 bytes), head gamma/lambda f64, epoch counter u32, named tensor
// table (u16 name length, name, u8 rank, u32 extents, f64 payload
// row-major), velocity table in the same encoding, RNG state (4 x u64),
// trailing CRC32 of all preceding bytes.

class CheckpointError : public DataError {
public:
    enum class Kind { version_mismatch, truncated, checksum_mismatch, malformed };
    Kind kind;
    CheckpointError(Kind k, const std::string& msg) : DataError(msg), kind(k) {}
};

namespace ckpt_detail {

inline void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}
inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::string& s;
    size_t pos = 0;
    void need(size_t n) const {
        if (pos + n > s.size())
            throw CheckpointError(CheckpointError::Kind::truncated,
                                  "checkpoint truncated at byte " + std::to_string(pos));
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint8_t>(s[pos]) | (static_cast<uint8_t>(s[pos + 1]) << 8);
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(s[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(s[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string out = s.substr(pos, n);
        pos += n;
        return out;
    }
};

inline void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
    put_u16(out, static_cast<uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.rank()));
    for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
    for (double x : t.v) put_f64(out, x);
}

inline std::pair<std::string, Tensor> get_tensor(Reader& r) {
    uint16_t len = r.u16();
    std::string name = r.bytes(len);
    r.need(1);
    int rank = static_cast<uint8_t>(r.s[r.pos++]);
    if (rank > 8)
        throw CheckpointError(CheckpointError::Kind::malformed,
                              "checkpoint tensor '" + name + "': implausible rank");
    std::vector<int> shape(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i) shape[static_cast<size_t>(i)] = static_cast<int>(r.u32());
    Tensor t(shape);
    for (auto& x : t.v) x = r.f64();
    return {name, std::move(t)};
}

}  // namespace ckpt_detail

struct Checkpoint {
    std::string config_echo;  // kv text: network config, class names, train echo
    double gamma = 1.0;
    double lambda = 0.1;
    int epochs_done = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::vector<std::pair<std::string, Tensor>> velocities;
    std::array<uint64_t, 4> rng_state{};

    const Tensor* find(const std::string& name) const {
        for (auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

inline Checkpoint make_checkpoint(Network& net, const RplHead& head, const TrainState& state,
                                  const std::string& config_echo) {
    Checkpoint c;
    c.config_echo = config_echo;
    c.gamma = head.gamma;
    c.lambda = head.lambda;
    c.epochs_done = state.epochs_done;
    for (auto& [name, t] : net.params()) c.tensors.emplace_back(name, *t);
    c.tensors.emplace_back("head.points", head.points);
    c.tensors.emplace_back("head.radius", head.radius);
    auto trainable = net.trainable_params();
    for (size_t i = 0; i < state.net_velocity.size() && i < trainable.size(); ++i)
        c.velocities.emplace_back("vel." + trainable[i].first, state.net_velocity[i]);
    if (state.head_velocity.size() == 2) {
        c.velocities.emplace_back("vel.head.points", state.head_velocity[0]);
        c.velocities.emplace_back("vel.head.radius", state.head_velocity[1]);
    }
    c.rng_state = state.rng.state();
    return c;
}

inline std::string encode_checkpoint(const Checkpoint& c) {
    using namespace ckpt_detail;
    std::string out;
    out.append("OSRK", 4);
    put_u32(out, 1);
    put_u32(out, static_cast<uint32_t>(c.config_echo.size()));
    out += c.config_echo;
    put_f64(out, c.gamma);
    put_f64(out, c.lambda);
    put_u32(out, static_cast<uint32_t>(c.epochs_done));
    put_u32(out, static_cast<uint32_t>(c.tensors.size()));
    for (auto& [name, t] : c.tensors) put_tensor(out, name, t);
    put_u32(out, static_cast<uint32_t>(c.velocities.size()));
    for (auto& [name, t] : c.velocities) put_tensor(out, name, t);
    for (uint64_t w : c.rng_state) put_u64(out, w);
    put_u32(out, crc32_of(out.data(), out.size()));
    return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
    using namespace ckpt_detail;
    if (bytes.size() < 8 || bytes.compare(0, 4, "OSRK") != 0)
        throw CheckpointError(CheckpointError::Kind::malformed, "checkpoint: bad magic");
    if (bytes.size() < 4 + 4 + 4)
        throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint: too short");
    // checksum covers everything before the trailing u32
    {
        Reader tail{bytes, bytes.size() - 4};
        uint32_t stored = tail.u32();
        uint32_t actual = crc32_of(bytes.data(), bytes.size() - 4);
        if (stored != actual)
            throw CheckpointError(CheckpointError::Kind::checksum_mismatch,
                                  "checkpoint: checksum mismatch");
    }
    Reader r{bytes, 4};
    uint32_t version = r.u32();
    if (version != 1)
        throw CheckpointError(CheckpointError::Kind::version_mismatch,
                              "checkpoint: unsupported version " + std::to_string(version));
    Checkpoint c;
    c.config_echo = r.bytes(r.u32());
    c.gamma = r.f64();
    c.lambda = r.f64();
    c.epochs_done = static_cast<int>(r.u32());
    uint32_t nt = r.u32();
    for (uint32_t i = 0; i < nt; ++i) c.tensors.push_back(get_tensor(r));
    uint32_t nv = r.u32();
    for (uint32_t i = 0; i < nv; ++i) c.velocities.push_back(get_tensor(r));
    for (auto& w : c.rng_state) w = r.u64();
    return c;
}

// Rebuilds the network/head/optimizer state a checkpoint describes.
struct RestoredRun {
    Network net;
    RplHead head;
    TrainState state;
    KvConfig config;
};

inline RestoredRun restore_checkpoint(const Checkpoint& c) {
    RestoredRun run;
    run.config = KvConfig::parse(c.config_echo);
    run.net = build_network(NetworkConfig::from_kv(run.config), 0);
    for (auto& [name, t] : run.net.params()) {
        const Tensor* src = c.find(name);
        if (!src || !src->same_shape(*t))
            throw CheckpointError(CheckpointError::Kind::malformed,
                                  "checkpoint: missing or misshaped tensor '" + name + "'");
        t->v = src->v;
    }
    const Tensor* p = c.find("head.points");
    const Tensor* r = c.find("head.radius");
    if (!p || !r || p->rank() != 2)
        throw CheckpointError(CheckpointError::Kind::malformed, "checkpoint: missing head tensors");
    run.head = RplHead(p->dim(0), p->dim(1), 0, c.gamma, c.lambda);
    run.head.points.v = p->v;
    run.head.radius.v = r->v;
    run.state.epochs_done = c.epochs_done;
    run.state.rng.set_state(c.rng_state);
    auto trainable = run.net.trainable_params();
    run.state.net_velocity.resize(trainable.size());
    for (size_t i = 0; i < trainable.size(); ++i) {
        for (auto& [name, t] : c.velocities) {
            if (name == "vel." + trainable[i].first) {
                run.state.net_velocity[i] = t;
                break;
            }
        }
    }
    run.state.head_velocity.resize(2);
    for (auto& [name, t] : c.velocities) {
        if (name == "vel.head.points") run.state.head_velocity[0] = t;
        if (name == "vel.head.radius") run.state.head_velocity[1] = t;
    }
    return run;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    write_file_atomic(path, encode_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return decode_checkpoint(read_file(path));
}

}  // namespace osrk
