#pragma once

// Backbone network: a fixed conv/pool/dense chain producing an
// m-dimensional embedding. ReLU follows every conv and every dense
// except the final embedding layer. The first conv layer can be
// initialized from a synthesized kernel bank and optionally frozen.

#include <string>
#include <vector>

#include "osrk/kernel_bank.hpp"
#include "osrk/kv_config.hpp"
#include "osrk/layers.hpp"
#include "osrk/rng.hpp"
#include "osrk/tensor.hpp"

namespace osrk {

struct LayerSpec {
    enum class Kind { conv, pool, dense };
    Kind kind = Kind::conv;
    int k = 0;         // kernel/window extent
    int channels = 0;  // conv output channels
    int stride = 1;
    int pad = 0;
    int out = 0;       // dense output width
};

enum class FirstLayerInit { random, asc_bank };

struct NetworkConfig {
    int input_size = 64;
    int embedding_dim = 32;
    FirstLayerInit first_layer_init = FirstLayerInit::random;
    std::string bank_path;
    bool freeze_first_layer = false;
    std::vector<LayerSpec> layers;

    // Walks the shape chain, throwing on the first inconsistent layer.
    // Returns the flattened width feeding each dense layer as a side
    // effect of validation.
    void validate() const {
        if (input_size < 1) throw ConfigError("network: input_size must be >= 1");
        if (embedding_dim < 2) throw ConfigError("network: embedding_dim must be >= 2");
        if (layers.empty()) throw ConfigError("network: layer list is empty");
        int c = 1, h = input_size, w = input_size;
        bool flat = false;
        int width = 0;
        for (size_t i = 0; i < layers.size(); ++i) {
            const LayerSpec& L = layers[i];
            std::string name = "layer." + std::to_string(i + 1);
            switch (L.kind) {
                case LayerSpec::Kind::conv: {
                    if (flat) throw ConfigError("network " + name + ": conv after dense");
                    if (L.k < 1 || L.channels < 1 || L.stride < 1 || L.pad < 0)
                        throw ConfigError("network " + name + ": bad conv geometry");
                    if (L.k > h + 2 * L.pad)
                        throw ConfigError("network " + name + ": kernel " + std::to_string(L.k) +
                                          " exceeds padded input " + std::to_string(h + 2 * L.pad));
                    h = conv_out_extent(h, L.k, L.stride, L.pad);
                    w = conv_out_extent(w, L.k, L.stride, L.pad);
                    c = L.channels;
                    break;
                }
                case LayerSpec::Kind::pool: {
                    if (flat) throw ConfigError("network " + name + ": pool after dense");
                    if (L.k > h)
                        throw ConfigError("network " + name + ": window " + std::to_string(L.k) +
                                          " exceeds input " + std::to_string(h));
                    h = (h - L.k) / L.stride + 1;
                    w = (w - L.k) / L.stride + 1;
                    break;
                }
                case LayerSpec::Kind::dense: {
                    if (L.out < 1) throw ConfigError("network " + name + ": dense width must be >= 1");
                    if (!flat) {
                        width = c * h * w;
                        flat = true;
                    }
                    width = L.out;
                    break;
                }
            }
            if (!flat && (h < 1 || w < 1))
                throw ConfigError("network " + name + ": spatial extent collapsed to zero");
        }
        if (!flat) throw ConfigError("network: no dense layer produces the embedding");
        if (width != embedding_dim)
            throw ConfigError("network: last dense width " + std::to_string(width) +
                              " does not equal embedding_dim " + std::to_string(embedding_dim));
    }

    // 64x64 single-channel desk-scale config with a 100-kernel 11x11
    // first layer and a 32-d embedding.
    static NetworkConfig desk() {
        NetworkConfig c;
        c.input_size = 64;
        c.embedding_dim = 32;
        c.layers = {
            {LayerSpec::Kind::conv, 11, 100, 2, 2, 0},
            {LayerSpec::Kind::pool, 3, 0, 2, 0, 0},
            {LayerSpec::Kind::conv, 3, 32, 1, 1, 0},
            {LayerSpec::Kind::pool, 3, 0, 2, 0, 0},
            {LayerSpec::Kind::dense, 0, 0, 1, 0, 128},
            {LayerSpec::Kind::dense, 0, 0, 1, 0, 32},
        };
        return c;
    }

    // Full-scale 227x227 config: five conv, three pool, three dense; the
    // final dense emits the embedding instead of closed-set logits.
    static NetworkConfig full_scale(int embedding_dim = 10) {
        NetworkConfig c;
        c.input_size = 227;
        c.embedding_dim = embedding_dim;
        c.layers = {
            {LayerSpec::Kind::conv, 31, 961, 4, 2, 0},
            {LayerSpec::Kind::pool, 3, 0, 2, 0, 0},
            {LayerSpec::Kind::conv, 5, 512, 1, 2, 0},
            {LayerSpec::Kind::pool, 3, 0, 2, 0, 0},
            {LayerSpec::Kind::conv, 3, 384, 1, 1, 0},
            {LayerSpec::Kind::conv, 3, 256, 1, 1, 0},
            {LayerSpec::Kind::conv, 3, 256, 1, 1, 0},
            {LayerSpec::Kind::pool, 3, 0, 2, 0, 0},
            {LayerSpec::Kind::dense, 0, 0, 1, 0, 1024},
            {LayerSpec::Kind::dense, 0, 0, 1, 0, 1024},
            {LayerSpec::Kind::dense, 0, 0, 1, 0, embedding_dim},
        };
        return c;
    }

    static NetworkConfig from_kv(const KvConfig& kv) {
        NetworkConfig c;
        c.input_size = static_cast<int>(kv.get_int("input_size"));
        c.embedding_dim = static_cast<int>(kv.get_int("embedding_dim"));
        std::string init = kv.get_or("first_layer_init", "random");
        if (init == "random") {
            c.first_layer_init = FirstLayerInit::random;
        } else if (init.rfind("asc_bank:", 0) == 0) {
            c.first_layer_init = FirstLayerInit::asc_bank;
            c.bank_path = init.substr(9);
        } else {
            throw ConfigError("network: first_layer_init must be 'random' or 'asc_bank:<path>'");
        }
        c.freeze_first_layer = kv.get_bool_or("freeze_first_layer", false);
        for (int n = 1;; ++n) {
            std::string key = "layer." + std::to_string(n);
            if (!kv.has(key)) break;
            c.layers.push_back(parse_layer(key, kv.get(key)));
        }
        c.validate();
        return c;
    }

    KvConfig to_kv() const {
        KvConfig kv;
        kv.set("input_size", std::to_string(input_size));
        kv.set("embedding_dim", std::to_string(embedding_dim));
        kv.set("first_layer_init", first_layer_init == FirstLayerInit::random
                                       ? "random"
                                       : "asc_bank:" + bank_path);
        kv.set("freeze_first_layer", freeze_first_layer ? "true" : "false");
        for (size_t i = 0; i < layers.size(); ++i) {
            const LayerSpec& L = layers[i];
            std::string v;
            switch (L.kind) {
                case LayerSpec::Kind::conv:
                    v = "conv,k=" + std::to_string(L.k) + ",c=" + std::to_string(L.channels) +
                        ",s=" + std::to_string(L.stride) + ",p=" + std::to_string(L.pad);
                    break;
                case LayerSpec::Kind::pool:
                    v = "pool,k=" + std::to_string(L.k) + ",s=" + std::to_string(L.stride);
                    break;
                case LayerSpec::Kind::dense:
                    v = "dense,out=" + std::to_string(L.out);
                    break;
            }
            kv.set("layer." + std::to_string(i + 1), v);
        }
        return kv;
    }

private:
    static LayerSpec parse_layer(const std::string& key, const std::string& value) {
        LayerSpec L;
        std::vector<std::string> parts;
        std::string cur;
        std::istringstream in(value);
        while (std::getline(in, cur, ',')) parts.push_back(KvConfig::trim(cur));
        if (parts.empty()) throw ConfigError("network " + key + ": empty layer line");
        std::map<std::string, long> args;
        for (size_t i = 1; i < parts.size(); ++i) {
            size_t eq = parts[i].find('=');
            if (eq == std::string::npos)
                throw ConfigError("network " + key + ": expected name=value, got '" + parts[i] + "'");
            args[parts[i].substr(0, eq)] = KvConfig::to_int(key, parts[i].substr(eq + 1));
        }
        auto arg = [&](const std::string& name, long fallback) {
            auto it = args.find(name);
            return it == args.end() ? fallback : it->second;
        };
        if (parts[0] == "conv") {
            L.kind = LayerSpec::Kind::conv;
            L.k = static_cast<int>(arg("k", 0));
            L.channels = static_cast<int>(arg("c", 0));
            L.stride = static_cast<int>(arg("s", 1));
            L.pad = static_cast<int>(arg("p", 0));
        } else if (parts[0] == "pool") {
            L.kind = LayerSpec::Kind::pool;
            L.k = static_cast<int>(arg("k", 2));
            L.stride = static_cast<int>(arg("s", 2));
        } else if (parts[0] == "dense") {
            L.kind = LayerSpec::Kind::dense;
            L.out = static_cast<int>(arg("out", 0));
        } else {
            throw ConfigError("network " + key + ": unknown layer kind '" + parts[0] + "'");
        }
        return L;
    }
};

// ============================================================
// Network
// ============================================================

class Network {
public:
    NetworkConfig config;

    struct Step {
        enum class Kind { conv, pool, dense, relu } kind;
        int idx;
    };

    std::vector<Conv2d> convs;
    std::vector<MaxPool2d> pools;
    std::vector<Dense> denses;
    std::vector<Relu> relus;
    std::vector<Step> steps;

    // Named learnable tensors in chain order: convN.weight/bias, fcN.weight/bias.
    std::vector<std::pair<std::string, Tensor*>> params() {
        std::vector<std::pair<std::string, Tensor*>> out;
        for (size_t i = 0; i < convs.size(); ++i) {
            out.emplace_back("conv" + std::to_string(i + 1) + ".weight", &convs[i].weight);
            out.emplace_back("conv" + std::to_string(i + 1) + ".bias", &convs[i].bias);
        }
        for (size_t i = 0; i < denses.size(); ++i) {
            out.emplace_back("fc" + std::to_string(i + 1) + ".weight", &denses[i].weight);
            out.emplace_back("fc" + std::to_string(i + 1) + ".bias", &denses[i].bias);
        }
        return out;
    }

    // Parameters the optimizer may update (excludes a frozen first layer).
    std::vector<std::pair<std::string, Tensor*>> trainable_params() {
        std::vector<std::pair<std::string, Tensor*>> out;
        for (auto& [name, t] : params()) {
            if (config.freeze_first_layer && !convs.empty() &&
                (t == &convs[0].weight || t == &convs[0].bias))
                continue;
            out.emplace_back(name, t);
        }
        return out;
    }

    void zero_grads() {
        for (auto& [name, t] : params()) t->zero_grad();
    }

    // Single sample [1,H,W] -> [m]
    Tensor forward(const Tensor& x, bool train) {
        if (x.rank() != 3 || x.dim(0) != 1 || x.dim(1) != config.input_size ||
            x.dim(2) != config.input_size)
            throw ShapeError("network: input " + x.shape_str() + " does not match configured [1," +
                             std::to_string(config.input_size) + "," +
                             std::to_string(config.input_size) + "]");
        Tensor cur = x;
        for (const Step& s : steps) {
            switch (s.kind) {
                case Step::Kind::conv: cur = convs[s.idx].forward(cur, train); break;
                case Step::Kind::pool: cur = pools[s.idx].forward(cur, train); break;
                case Step::Kind::dense: cur = denses[s.idx].forward(cur, train); break;
                case Step::Kind::relu: cur = relus[s.idx].forward(cur, train); break;
            }
        }
        return cur;
    }

    // Forward that also returns the output of the conv_index-th conv
    // layer (0-based, pre-activation), for feature-map inspection.
    Tensor forward_capture(const Tensor& x, int conv_index, Tensor& captured) {
        if (conv_index < 0 || conv_index >= static_cast<int>(convs.size()))
            throw ArgumentError("forward_capture: conv layer index " + std::to_string(conv_index) +
                                " outside [0," + std::to_string(convs.size()) + ")");
        Tensor cur = x;
        for (const Step& s : steps) {
            switch (s.kind) {
                case Step::Kind::conv:
                    cur = convs[s.idx].forward(cur, false);
                    if (s.idx == conv_index) captured = cur;
                    break;
                case Step::Kind::pool: cur = pools[s.idx].forward(cur, false); break;
                case Step::Kind::dense: cur = denses[s.idx].forward(cur, false); break;
                case Step::Kind::relu: cur = relus[s.idx].forward(cur, false); break;
            }
        }
        return cur;
    }

    // Backward for the most recent forward(train=true) call.
    void backward(const Tensor& dembedding) {
        Tensor cur = dembedding;
        for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
            switch (it->kind) {
                case Step::Kind::conv: cur = convs[it->idx].backward(cur); break;
                case Step::Kind::pool: cur = pools[it->idx].backward(cur); break;
                case Step::Kind::dense: cur = denses[it->idx].backward(cur); break;
                case Step::Kind::relu: cur = relus[it->idx].backward(cur); break;
            }
        }
    }

    // Batch [B,1,H,W] -> [B,m]. Training mode retains only the last
    // sample's caches; training loops interleave forward/backward per
    // sample instead.
    Tensor forward_embedding(const Tensor& batch, bool train = false) {
        if (batch.rank() != 4)
            throw ShapeError("network: expected batch [B,1,H,W], got " + batch.shape_str());
        const int b = batch.dim(0);
        Tensor out({b, config.embedding_dim});
        Tensor sample({batch.dim(1), batch.dim(2), batch.dim(3)});
        const size_t plane = sample.v.size();
        for (int i = 0; i < b; ++i) {
            std::copy_n(batch.v.begin() + static_cast<size_t>(i) * plane, plane, sample.v.begin());
            Tensor e = forward(sample, train);
            std::copy_n(e.v.begin(), e.v.size(),
                        out.v.begin() + static_cast<size_t>(i) * config.embedding_dim);
        }
        return out;
    }

    int64_t parameter_count() {
        int64_t n = 0;
        for (auto& [name, t] : params()) n += t->numel();
        return n;
    }
};

// Uniform +/-sqrt(6/fan_in) weights, zero biases, deterministic under seed.
inline Network build_network(const NetworkConfig& config, uint64_t seed) {
    config.validate();
    Network net;
    net.config = config;
    Rng rng(mix_seed(seed, 0x6e657477));  // namespaced stream per purpose
    int c = 1, h = config.input_size, w = config.input_size;
    bool flat = false;
    int width = 0;
    for (size_t i = 0; i < config.layers.size(); ++i) {
        const LayerSpec& L = config.layers[i];
        switch (L.kind) {
            case LayerSpec::Kind::conv: {
                Conv2d conv(L.channels, c, L.k, L.stride, L.pad);
                conv.first_layer = net.steps.empty();
                double bound = std::sqrt(6.0 / (c * L.k * L.k));
                for (auto& x : conv.weight.v) x = rng.uniform(-bound, bound);
                if (net.convs.empty() && config.freeze_first_layer) conv.frozen = true;
                net.convs.push_back(std::move(conv));
                net.steps.push_back({Network::Step::Kind::conv, static_cast<int>(net.convs.size() - 1)});
                net.relus.emplace_back();
                net.steps.push_back({Network::Step::Kind::relu, static_cast<int>(net.relus.size() - 1)});
                h = conv_out_extent(h, L.k, L.stride, L.pad);
                w = conv_out_extent(w, L.k, L.stride, L.pad);
                c = L.channels;
                break;
            }
            case LayerSpec::Kind::pool: {
                net.pools.emplace_back(L.k, L.stride);
                net.steps.push_back({Network::Step::Kind::pool, static_cast<int>(net.pools.size() - 1)});
                h = (h - L.k) / L.stride + 1;
                w = (w - L.k) / L.stride + 1;
                break;
            }
            case LayerSpec::Kind::dense: {
                if (!flat) {
                    width = c * h * w;
                    flat = true;
                }
                Dense dense(L.out, width);
                double bound = std::sqrt(6.0 / width);
                for (auto& x : dense.weight.v) x = rng.uniform(-bound, bound);
                net.denses.push_back(std::move(dense));
                net.steps.push_back({Network::Step::Kind::dense, static_cast<int>(net.denses.size() - 1)});
                bool last_dense = true;
                for (size_t j = i + 1; j < config.layers.size(); ++j)
                    if (config.layers[j].kind == LayerSpec::Kind::dense) last_dense = false;
                if (!last_dense) {
                    net.relus.emplace_back();
                    net.steps.push_back({Network::Step::Kind::relu, static_cast<int>(net.relus.size() - 1)});
                }
                width = L.out;
                break;
            }
        }
    }
    return net;
}

// Copies bank kernel j into first-conv channel j; zeroes the bias;
// leaves every other layer untouched.
inline void init_conv1_from_bank(Network& net, const KernelBank& bank) {
    if (net.convs.empty()) throw ConfigError("init_conv1_from_bank: network has no conv layer");
    Conv2d& conv = net.convs.front();
    if (conv.ksize() != bank.kernel_size)
        throw ConfigError("init_conv1_from_bank: conv kernel extent " + std::to_string(conv.ksize()) +
                          " != bank kernel size " + std::to_string(bank.kernel_size));
    if (static_cast<size_t>(conv.c_out()) != bank.count())
        throw ConfigError("init_conv1_from_bank: conv channels " + std::to_string(conv.c_out()) +
                          " != bank count " + std::to_string(bank.count()));
    if (conv.c_in() != 1)
        throw ConfigError("init_conv1_from_bank: first conv must take a single channel, has " +
                          std::to_string(conv.c_in()));
    const int k = conv.ksize();
    for (size_t j = 0; j < bank.count(); ++j)
        std::copy_n(bank.kernels[j].v.begin(), static_cast<size_t>(k) * k,
                    conv.weight.v.begin() + j * k * k);
    std::fill(conv.bias.v.begin(), conv.bias.v.end(), 0.0);
}

}  // namespace osrk
