#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "senres/dataset.hpp"
#include "senres/optim.hpp"
#include "senres/rng.hpp"
#include "senres/tape.hpp"
#include "senres/tensor.hpp"

namespace senres {

// Convolution stack followed by stacked LSTM layers; the representation is
// the last hidden state of the top LSTM layer.
struct EncoderConfig {
    int conv_layers = 4;
    int filters = 64;
    int kernel = 5;
    int lstm_layers = 2;
    int lstm_hidden = 128;
    double dropout = 0.5;  // applied to inputs of LSTM layers past the first

    void validate(int64_t window_len) const {
        if (conv_layers < 1 || filters < 1 || kernel < 1 || lstm_layers < 1 || lstm_hidden < 1)
            throw ConfigError("EncoderConfig: all sizes must be positive");
        if (dropout < 0.0 || dropout >= 1.0)
            throw ConfigError("EncoderConfig: dropout must be in [0,1)");
        if (conv_out_len(window_len) < 1)
            throw ConfigError("EncoderConfig: window length " + std::to_string(window_len) +
                              " too short for " + std::to_string(conv_layers) +
                              " conv layers of kernel " + std::to_string(kernel));
    }

    int64_t conv_out_len(int64_t window_len) const {
        return window_len - static_cast<int64_t>(conv_layers) * (kernel - 1);
    }

    int representation_dim() const { return lstm_hidden; }

    // Small configuration for minute-scale CPU runs.
    static EncoderConfig desk() {
        EncoderConfig c;
        c.conv_layers = 1;
        c.filters = 6;
        c.kernel = 5;
        c.lstm_layers = 1;
        c.lstm_hidden = 12;
        c.dropout = 0.0;
        return c;
    }

    nlohmann::json to_json() const {
        return {{"conv_layers", conv_layers}, {"filters", filters},     {"kernel", kernel},
                {"lstm_layers", lstm_layers}, {"lstm_hidden", lstm_hidden},
                {"dropout", dropout}};
    }

    static EncoderConfig from_json(const nlohmann::json& j) {
        if (!j.is_object()) throw ConfigError("encoder config: expected an object");
        EncoderConfig c;
        for (const auto& [key, val] : j.items()) {
            if (key == "conv_layers") c.conv_layers = val.get<int>();
            else if (key == "filters") c.filters = val.get<int>();
            else if (key == "kernel") c.kernel = val.get<int>();
            else if (key == "lstm_layers") c.lstm_layers = val.get<int>();
            else if (key == "lstm_hidden") c.lstm_hidden = val.get<int>();
            else if (key == "dropout") c.dropout = val.get<double>();
            else throw ConfigError("encoder config: unknown key '" + key + "'");
        }
        return c;
    }
};

struct ProjectionConfig {
    std::vector<int> dims;  // hidden ... output; ReLU between, none after last

    void validate() const {
        if (dims.empty()) throw ConfigError("ProjectionConfig: need at least one layer");
        for (int d : dims)
            if (d < 1) throw ConfigError("ProjectionConfig: dims must be positive");
    }

    int output_dim() const { return dims.back(); }

    static ProjectionConfig simclr_default() { return {{256, 128, 50}}; }
    static ProjectionConfig moco_default() { return {{256, 128}}; }
    static ProjectionConfig desk() { return {{32, 16}}; }

    nlohmann::json to_json() const { return {{"dims", dims}}; }

    static ProjectionConfig from_json(const nlohmann::json& j) {
        if (!j.is_object() || !j.contains("dims") || !j["dims"].is_array())
            throw ConfigError("projection config: expected {\"dims\": [...]}");
        for (const auto& [key, val] : j.items())
            if (key != "dims") throw ConfigError("projection config: unknown key '" + key + "'");
        ProjectionConfig c;
        for (const auto& d : j["dims"]) c.dims.push_back(d.get<int>());
        return c;
    }
};

namespace detail {

template <typename T>
Tensor<T> glorot(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor<T> t = Tensor<T>::zeros(shape);
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-limit, limit));
    t.requires_grad = true;
    return t;
}

}  // namespace detail

// Fresh encoder parameters, Glorot-uniform weights, zero biases except the
// LSTM forget-gate block which starts at 1. Gate column order is
// (input, forget, candidate, output).
template <typename T>
ParamMap<T> init_encoder_params(const EncoderConfig& cfg, int64_t in_channels, Rng& rng) {
    ParamMap<T> p;
    int64_t cin = in_channels;
    for (int i = 0; i < cfg.conv_layers; ++i) {
        std::string base = "conv" + std::to_string(i);
        p.emplace(base + ".w",
                  detail::glorot<T>({cfg.kernel, cin, cfg.filters}, cfg.kernel * cin,
                                    cfg.kernel * cfg.filters, rng));
        Tensor<T> b = Tensor<T>::zeros({cfg.filters});
        b.requires_grad = true;
        p.emplace(base + ".b", std::move(b));
        cin = cfg.filters;
    }
    int64_t d = cfg.filters;
    int64_t h = cfg.lstm_hidden;
    for (int i = 0; i < cfg.lstm_layers; ++i) {
        std::string base = "lstm" + std::to_string(i);
        p.emplace(base + ".wx", detail::glorot<T>({d, 4 * h}, d, 4 * h, rng));
        p.emplace(base + ".wh", detail::glorot<T>({h, 4 * h}, h, 4 * h, rng));
        Tensor<T> b = Tensor<T>::zeros({4 * h});
        for (int64_t j = h; j < 2 * h; ++j) b.data[static_cast<size_t>(j)] = T(1);
        b.requires_grad = true;
        p.emplace(base + ".b", std::move(b));
        d = h;
    }
    return p;
}

template <typename T>
void append_projection_params(ParamMap<T>& p, int64_t in_dim, const ProjectionConfig& cfg,
                              Rng& rng) {
    cfg.validate();
    int64_t d = in_dim;
    for (size_t i = 0; i < cfg.dims.size(); ++i) {
        std::string base = "proj" + std::to_string(i);
        int64_t out = cfg.dims[i];
        p.emplace(base + ".w", detail::glorot<T>({d, out}, d, out, rng));
        Tensor<T> b = Tensor<T>::zeros({out});
        b.requires_grad = true;
        p.emplace(base + ".b", std::move(b));
        d = out;
    }
}

template <typename T>
void append_head_params(ParamMap<T>& p, int64_t in_dim, int64_t num_classes, Rng& rng) {
    p.emplace("head.w", detail::glorot<T>({in_dim, num_classes}, in_dim, num_classes, rng));
    Tensor<T> b = Tensor<T>::zeros({num_classes});
    b.requires_grad = true;
    p.emplace("head.b", std::move(b));
}

template <typename T>
int64_t param_count(const ParamMap<T>& p) {
    int64_t n = 0;
    for (const auto& [name, t] : p) n += t.numel();
    return n;
}

// Parameters registered as tape leaves for one forward/backward pass.
template <typename T>
struct BoundParams {
    std::map<std::string, Var<T>> vars;

    Var<T> at(const std::string& name) const {
        auto it = vars.find(name);
        if (it == vars.end()) throw InvalidState("missing parameter '" + name + "'");
        return it->second;
    }
    bool has(const std::string& name) const { return vars.count(name) != 0; }
};

template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamMap<T>& params, bool trainable) {
    BoundParams<T> out;
    for (const auto& [name, t] : params) {
        Tensor<T> copy = t;
        copy.requires_grad = trainable;
        out.vars.emplace(name, tape.leaf(std::move(copy)));
    }
    return out;
}

// Gradients of every trainable bound parameter, keyed by name.
template <typename T>
std::map<std::string, std::vector<T>> collect_grads(const BoundParams<T>& bound) {
    std::map<std::string, std::vector<T>> out;
    for (const auto& [name, var] : bound.vars)
        if (var.tape->rgrad(var)) out.emplace(name, var.grad());
    return out;
}

// Conv stack then LSTM unroll; returns (B x lstm_hidden). Dropout (training
// only) is applied to the inputs of LSTM layers after the first.
template <typename T>
Var<T> encode(Tape<T>& tape, Var<T> batch, const BoundParams<T>& params,
              const EncoderConfig& cfg, bool training, Rng& rng) {
    const Tensor<T>& bv = tape.value(batch);
    if (bv.rank() != 3) throw ShapeError("encode: batch must be (B x T x C)");
    cfg.validate(bv.shape[1]);
    Var<T> x = batch;
    for (int i = 0; i < cfg.conv_layers; ++i) {
        std::string base = "conv" + std::to_string(i);
        x = tape.relu(tape.conv1d(x, params.at(base + ".w"), params.at(base + ".b")));
    }
    int64_t B = tape.value(x).shape[0];
    int64_t steps = tape.value(x).shape[1];
    int64_t h = cfg.lstm_hidden;

    std::vector<Var<T>> seq(static_cast<size_t>(steps));
    for (int64_t t = 0; t < steps; ++t) seq[static_cast<size_t>(t)] = tape.slice_time(x, t);

    Var<T> last_h{};
    for (int layer = 0; layer < cfg.lstm_layers; ++layer) {
        std::string base = "lstm" + std::to_string(layer);
        Var<T> wx = params.at(base + ".wx");
        Var<T> wh = params.at(base + ".wh");
        Var<T> b = params.at(base + ".b");
        Var<T> hs = tape.constant(Tensor<T>::zeros({B, h}));
        Var<T> cs = tape.constant(Tensor<T>::zeros({B, h}));
        for (int64_t t = 0; t < steps; ++t) {
            Var<T> in = seq[static_cast<size_t>(t)];
            if (layer > 0 && training && cfg.dropout > 0.0)
                in = tape.dropout(in, cfg.dropout, rng);
            auto [hn, cn] = tape.lstm_step(in, hs, cs, wx, wh, b);
            hs = hn;
            cs = cn;
            seq[static_cast<size_t>(t)] = hn;  // input to the next layer
        }
        last_h = hs;
    }
    return last_h;
}

// MLP head: ReLU between layers, bare affine output.
template <typename T>
Var<T> project(Tape<T>& tape, Var<T> h, const BoundParams<T>& params,
               const ProjectionConfig& cfg) {
    cfg.validate();
    Var<T> x = h;
    for (size_t i = 0; i < cfg.dims.size(); ++i) {
        std::string base = "proj" + std::to_string(i);
        x = tape.add_bias(tape.matmul(x, params.at(base + ".w")), params.at(base + ".b"));
        if (i + 1 < cfg.dims.size()) x = tape.relu(x);
    }
    return x;
}

template <typename T>
Var<T> classify(Tape<T>& tape, Var<T> h, const BoundParams<T>& params) {
    return tape.add_bias(tape.matmul(h, params.at("head.w")), params.at("head.b"));
}

// --- batch assembly ---------------------------------------------------------

template <typename T>
Tensor<T> make_batch(const WindowSet& ws, const std::vector<size_t>& indices) {
    if (indices.empty()) throw InvalidParams("make_batch: empty index list");
    int64_t t = ws.windows[indices[0]].timesteps;
    int64_t c = ws.windows[indices[0]].channels;
    Tensor<T> out = Tensor<T>::zeros({static_cast<int64_t>(indices.size()), t, c});
    for (size_t b = 0; b < indices.size(); ++b) {
        const Window& w = ws.windows[indices[b]];
        if (w.timesteps != t || w.channels != c) throw ShapeError("make_batch: ragged windows");
        for (size_t e = 0; e < w.data.size(); ++e)
            out.data[b * w.data.size() + e] = static_cast<T>(w.data[e]);
    }
    return out;
}

template <typename T>
Tensor<T> windows_to_batch(const std::vector<Window>& windows) {
    if (windows.empty()) throw InvalidParams("windows_to_batch: empty list");
    int64_t t = windows[0].timesteps, c = windows[0].channels;
    Tensor<T> out = Tensor<T>::zeros({static_cast<int64_t>(windows.size()), t, c});
    for (size_t b = 0; b < windows.size(); ++b) {
        if (windows[b].timesteps != t || windows[b].channels != c)
            throw ShapeError("windows_to_batch: ragged windows");
        for (size_t e = 0; e < windows[b].data.size(); ++e)
            out.data[b * windows[b].data.size() + e] = static_cast<T>(windows[b].data[e]);
    }
    return out;
}

inline std::vector<int64_t> labels_of(const WindowSet& ws, const std::vector<size_t>& indices) {
    std::vector<int64_t> out;
    out.reserve(indices.size());
    for (size_t i : indices) {
        int l = ws.windows[i].label;
        if (l == kNoLabel) throw InvalidParams("labels_of: unlabeled window in labeled batch");
        out.push_back(l);
    }
    return out;
}

}  // namespace senres
