#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "senres/augment.hpp"
#include "senres/dataset.hpp"
#include "senres/encoder.hpp"
#include "senres/manifest.hpp"
#include "senres/optim.hpp"
#include "senres/stats.hpp"

namespace senres {

enum class Protocol { supervised, linear, finetune };

inline std::string to_string(Protocol p) {
    switch (p) {
        case Protocol::supervised: return "supervised";
        case Protocol::linear: return "linear";
        case Protocol::finetune: return "finetune";
    }
    return "?";
}

inline Protocol protocol_from_string(const std::string& s) {
    if (s == "supervised") return Protocol::supervised;
    if (s == "linear") return Protocol::linear;
    if (s == "finetune") return Protocol::finetune;
    throw ConfigError("unknown protocol '" + s + "'");
}

struct EvalConfig {
    Protocol protocol = Protocol::supervised;
    double label_fraction = 0.6;
    int64_t batch = 0;    // 0: pick by the fraction rule below
    int64_t epochs = 200;
    double lr = 0.0;      // 0: 1e-2 for linear, 5e-4 otherwise
    int augment_times = 0;
    int repetitions = 10;
    uint64_t seed = 0;
    bool stratified = true;
    // z-score channels with statistics from the training split (applied
    // before any augmentation expansion)
    bool standardize = false;
    EncoderConfig encoder;
    int workers = 0;

    void validate() const {
        if (!(label_fraction > 0.0 && label_fraction < 1.0))
            throw ConfigError("eval: label fraction must be in (0,1)");
        if (repetitions < 1) throw ConfigError("eval: repetitions must be >= 1");
        if (epochs < 0 || augment_times < 0) throw ConfigError("eval: negative count");
    }

    double resolved_lr() const {
        if (lr > 0.0) return lr;
        return protocol == Protocol::linear ? 1e-2 : 5e-4;
    }

    // Canonical batch sizes for the 1% / 10% / 60% label fractions; other
    // fractions fall back to a size capped by the training set.
    int64_t resolved_batch(size_t train_size) const {
        int64_t b = batch;
        if (b == 0) {
            if (std::abs(label_fraction - 0.01) < 1e-9) b = 50;
            else if (std::abs(label_fraction - 0.10) < 1e-9) b = 500;
            else if (std::abs(label_fraction - 0.60) < 1e-9) b = 1000;
            else b = 128;
        }
        return std::max<int64_t>(1, std::min<int64_t>(b, static_cast<int64_t>(train_size)));
    }
};

template <typename T>
struct EvalOutcome {
    double macro_f1 = 0.0;
    ParamMap<T> params;
    RunManifest manifest;
};

// Original windows plus `times` augmented copies each, labels preserved.
inline WindowSet expand_with_augment(const WindowSet& ws, const AugmentSpec& aug, int times,
                                     uint64_t seed, int workers = 0) {
    if (times < 0) throw InvalidParams("expand_with_augment: negative times");
    aug.validate();
    WindowSet out = ws;
    size_t n = ws.windows.size();
    out.windows.resize(n * static_cast<size_t>(1 + times));
    int w = workers > 0 ? workers : default_workers();
    parallel_for(static_cast<int64_t>(n) * times, w, [&](int64_t j) {
        size_t wi = static_cast<size_t>(j) % n;
        int copy = static_cast<int>(static_cast<size_t>(j) / n);
        Rng rng = Rng::stream(seed, (static_cast<uint64_t>(copy + 1) << 40) ^ wi);
        out.windows[n * static_cast<size_t>(copy + 1) + wi] = apply(aug, ws.windows[wi], rng);
    });
    return out;
}

namespace detail {

template <typename T>
void require_all_classes(const WindowSet& ws) {
    std::vector<size_t> counts = ws.per_class_counts();
    for (size_t c = 0; c < counts.size(); ++c)
        if (counts[c] == 0)
            throw ConfigError("training set has no windows of class '" + ws.class_names[c] +
                              "'");
}

// One optimization pass over the full encoder + head graph.
template <typename T>
std::vector<double> train_full(ParamMap<T>& params, const WindowSet& train,
                               const EncoderConfig& enc_cfg, double lr, int64_t batch,
                               int64_t epochs, uint64_t seed) {
    AdamState<T> opt;
    opt.cfg.lr = static_cast<T>(lr);
    Rng drop_rng = Rng::stream(seed, 3);
    std::vector<size_t> order(train.windows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> losses;
    for (int64_t epoch = 0; epoch < epochs; ++epoch) {
        Rng shuffle_rng = Rng::stream(seed, 2000 + static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        double sum = 0.0;
        int64_t nb = 0;
        for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(batch)) {
            size_t bsz = std::min(static_cast<size_t>(batch), order.size() - pos);
            std::vector<size_t> idx(order.begin() + static_cast<int64_t>(pos),
                                    order.begin() + static_cast<int64_t>(pos + bsz));
            Tape<T> tape;
            BoundParams<T> bound = bind_params(tape, params, true);
            Var<T> x = tape.constant(make_batch<T>(train, idx));
            Var<T> h = encode(tape, x, bound, enc_cfg, true, drop_rng);
            Var<T> logits = classify(tape, h, bound);
            Var<T> loss = tape.cross_entropy_rows(logits, labels_of(train, idx), false);
            T lv = tape.value(loss).data[0];
            if (!std::isfinite(static_cast<double>(lv)))
                throw NumericError("training loss became non-finite at epoch " +
                                   std::to_string(epoch + 1));
            sum += static_cast<double>(lv);
            ++nb;
            tape.backward(loss);
            auto grads = collect_grads(bound);
            adam_step(params, grads, opt);
        }
        losses.push_back(nb > 0 ? sum / static_cast<double>(nb) : 0.0);
    }
    return losses;
}

// Frozen-encoder representations in fixed-size chunks.
template <typename T>
Tensor<T> compute_representations(const ParamMap<T>& encoder_params,
                                  const EncoderConfig& enc_cfg, const WindowSet& ws,
                                  int64_t chunk = 256) {
    int64_t n = static_cast<int64_t>(ws.windows.size());
    int64_t r = enc_cfg.representation_dim();
    Tensor<T> out = Tensor<T>::zeros({n, r});
    Rng dummy(0);
    for (int64_t pos = 0; pos < n; pos += chunk) {
        int64_t bsz = std::min(chunk, n - pos);
        std::vector<size_t> idx(static_cast<size_t>(bsz));
        for (int64_t i = 0; i < bsz; ++i) idx[static_cast<size_t>(i)] = static_cast<size_t>(pos + i);
        Tape<T> tape;
        BoundParams<T> bound = bind_params(tape, encoder_params, false);
        Var<T> x = tape.constant(make_batch<T>(ws, idx));
        Var<T> h = encode(tape, x, bound, enc_cfg, false, dummy);
        const Tensor<T>& hv = tape.value(h);
        for (int64_t i = 0; i < bsz; ++i)
            for (int64_t j = 0; j < r; ++j)
                out.data[static_cast<size_t>((pos + i) * r + j)] =
                    hv.data[static_cast<size_t>(i * r + j)];
    }
    return out;
}

template <typename T>
std::vector<int> predict_from_reps(const Tensor<T>& reps, const ParamMap<T>& head) {
    const Tensor<T>& w = head.at("head.w");
    const Tensor<T>& b = head.at("head.b");
    int64_t n = reps.shape[0], r = reps.shape[1], k = w.shape[1];
    if (w.shape[0] != r) throw ShapeError("predict: representation dim mismatch");
    std::vector<int> preds(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int best = 0;
        T best_v = std::numeric_limits<T>::lowest();
        for (int64_t c = 0; c < k; ++c) {
            T v = b.data[static_cast<size_t>(c)];
            for (int64_t j = 0; j < r; ++j)
                v += reps.data[static_cast<size_t>(i * r + j)] *
                     w.data[static_cast<size_t>(j * k + c)];
            if (v > best_v) {
                best_v = v;
                best = static_cast<int>(c);
            }
        }
        preds[static_cast<size_t>(i)] = best;
    }
    return preds;
}

template <typename T>
std::vector<int> predict(const ParamMap<T>& params, const EncoderConfig& enc_cfg,
                         const WindowSet& ws) {
    Tensor<T> reps = compute_representations(params, enc_cfg, ws);
    return predict_from_reps(reps, params);
}

template <typename T>
std::vector<double> train_head_on_reps(ParamMap<T>& head, const Tensor<T>& reps,
                                       const std::vector<int64_t>& labels, double lr,
                                       int64_t batch, int64_t epochs, uint64_t seed) {
    AdamState<T> opt;
    opt.cfg.lr = static_cast<T>(lr);
    int64_t n = reps.shape[0], r = reps.shape[1];
    std::vector<size_t> order(static_cast<size_t>(n));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> losses;
    for (int64_t epoch = 0; epoch < epochs; ++epoch) {
        Rng shuffle_rng = Rng::stream(seed, 4000 + static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        double sum = 0.0;
        int64_t nb = 0;
        for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(batch)) {
            size_t bsz = std::min(static_cast<size_t>(batch), order.size() - pos);
            Tensor<T> xb = Tensor<T>::zeros({static_cast<int64_t>(bsz), r});
            std::vector<int64_t> yb(bsz);
            for (size_t i = 0; i < bsz; ++i) {
                size_t src = order[pos + i];
                for (int64_t j = 0; j < r; ++j)
                    xb.data[i * static_cast<size_t>(r) + static_cast<size_t>(j)] =
                        reps.data[src * static_cast<size_t>(r) + static_cast<size_t>(j)];
                yb[i] = labels[src];
            }
            Tape<T> tape;
            BoundParams<T> bound = bind_params(tape, head, true);
            Var<T> x = tape.constant(std::move(xb));
            Var<T> logits = classify(tape, x, bound);
            Var<T> loss = tape.cross_entropy_rows(logits, std::move(yb), false);
            T lv = tape.value(loss).data[0];
            if (!std::isfinite(static_cast<double>(lv)))
                throw NumericError("head training loss became non-finite at epoch " +
                                   std::to_string(epoch + 1));
            sum += static_cast<double>(lv);
            ++nb;
            tape.backward(loss);
            auto grads = collect_grads(bound);
            adam_step(head, grads, opt);
        }
        losses.push_back(nb > 0 ? sum / static_cast<double>(nb) : 0.0);
    }
    return losses;
}

}  // namespace detail

// Encoder + linear head trained end-to-end with cross-entropy on a labeled
// split; the metric is macro mean F1 on the held-out side. When aug is given
// the training split is expanded first (original + augment_times copies).
template <typename T>
EvalOutcome<T> train_supervised(const WindowSet& ws, const EvalConfig& cfg,
                                const AugmentSpec* aug = nullptr) {
    cfg.validate();
    SplitSpec sp{cfg.label_fraction, cfg.seed, cfg.stratified};
    SplitResult sr = split(ws, sp);
    detail::require_all_classes<T>(sr.train);
    if (cfg.standardize) {
        ChannelStats st = channel_stats(sr.train);
        sr.train = standardize(sr.train, st);
        sr.test = standardize(sr.test, st);
    }
    WindowSet train = sr.train;
    if (aug && cfg.augment_times > 0)
        train = expand_with_augment(train, *aug, cfg.augment_times, Rng::mix(cfg.seed, 77),
                                    cfg.workers);

    Rng init_rng = Rng::stream(cfg.seed, 5);
    ParamMap<T> params =
        init_encoder_params<T>(cfg.encoder, ws.windows[0].channels, init_rng);
    append_head_params<T>(params, cfg.encoder.representation_dim(), ws.num_classes(), init_rng);

    auto t0 = std::chrono::steady_clock::now();
    EvalOutcome<T> out;
    out.manifest.kind = "eval";
    out.manifest.seed = cfg.seed;
    out.manifest.config["protocol"] = "supervised";
    out.manifest.config["label_fraction"] = cfg.label_fraction;
    out.manifest.config["epochs"] = cfg.epochs;
    out.manifest.config["lr"] = cfg.resolved_lr();
    out.manifest.config["augment_times"] = cfg.augment_times;
    out.manifest.epoch_losses =
        detail::train_full(params, train, cfg.encoder, cfg.resolved_lr(),
                           cfg.resolved_batch(train.size()), cfg.epochs, cfg.seed);
    std::vector<int> preds = detail::predict(params, cfg.encoder, sr.test);
    std::vector<int> truth;
    for (const auto& w : sr.test.windows) truth.push_back(w.label);
    out.macro_f1 = mean_f1(preds, truth, ws.num_classes());
    out.manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.params = std::move(params);
    return out;
}

// Frozen-encoder protocol: representations are computed once, then only a
// linear head is trained on them. Encoder parameters are never touched.
template <typename T>
EvalOutcome<T> linear_evaluate(const ParamMap<T>& encoder_params, const WindowSet& ws,
                               const EvalConfig& cfg) {
    cfg.validate();
    for (const auto& [name, t] : encoder_params)
        if (name.rfind("head.", 0) == 0)
            throw FormatError("linear_evaluate: checkpoint already contains a head");
    SplitSpec sp{cfg.label_fraction, cfg.seed, cfg.stratified};
    SplitResult sr = split(ws, sp);
    detail::require_all_classes<T>(sr.train);
    if (cfg.standardize) {
        ChannelStats st = channel_stats(sr.train);
        sr.train = standardize(sr.train, st);
        sr.test = standardize(sr.test, st);
    }

    auto t0 = std::chrono::steady_clock::now();
    Tensor<T> train_reps = detail::compute_representations(encoder_params, cfg.encoder, sr.train);
    Tensor<T> test_reps = detail::compute_representations(encoder_params, cfg.encoder, sr.test);

    std::vector<int64_t> train_labels;
    for (const auto& w : sr.train.windows) train_labels.push_back(w.label);

    Rng init_rng = Rng::stream(cfg.seed, 6);
    ParamMap<T> head;
    append_head_params<T>(head, cfg.encoder.representation_dim(), ws.num_classes(), init_rng);
    EvalOutcome<T> out;
    out.manifest.kind = "eval";
    out.manifest.seed = cfg.seed;
    out.manifest.config["protocol"] = "linear";
    out.manifest.config["label_fraction"] = cfg.label_fraction;
    out.manifest.config["epochs"] = cfg.epochs;
    out.manifest.config["lr"] = cfg.resolved_lr();
    out.manifest.epoch_losses =
        detail::train_head_on_reps(head, train_reps, train_labels, cfg.resolved_lr(),
                                   cfg.resolved_batch(sr.train.size()), cfg.epochs, cfg.seed);
    std::vector<int> preds = detail::predict_from_reps(test_reps, head);
    std::vector<int> truth;
    for (const auto& w : sr.test.windows) truth.push_back(w.label);
    out.macro_f1 = mean_f1(preds, truth, ws.num_classes());
    out.manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.params = std::move(head);
    return out;
}

// Pretrained initialization, everything trainable.
template <typename T>
EvalOutcome<T> fine_tune(const ParamMap<T>& encoder_params, const WindowSet& ws,
                         const EvalConfig& cfg) {
    cfg.validate();
    SplitSpec sp{cfg.label_fraction, cfg.seed, cfg.stratified};
    SplitResult sr = split(ws, sp);
    detail::require_all_classes<T>(sr.train);
    if (cfg.standardize) {
        ChannelStats st = channel_stats(sr.train);
        sr.train = standardize(sr.train, st);
        sr.test = standardize(sr.test, st);
    }

    ParamMap<T> params = encoder_params;
    for (auto& [name, t] : params) t.requires_grad = true;
    Rng init_rng = Rng::stream(cfg.seed, 7);
    append_head_params<T>(params, cfg.encoder.representation_dim(), ws.num_classes(), init_rng);

    auto t0 = std::chrono::steady_clock::now();
    EvalOutcome<T> out;
    out.manifest.kind = "eval";
    out.manifest.seed = cfg.seed;
    out.manifest.config["protocol"] = "finetune";
    out.manifest.config["label_fraction"] = cfg.label_fraction;
    out.manifest.config["epochs"] = cfg.epochs;
    out.manifest.config["lr"] = cfg.resolved_lr();
    out.manifest.epoch_losses =
        detail::train_full(params, sr.train, cfg.encoder, cfg.resolved_lr(),
                           cfg.resolved_batch(sr.train.size()), cfg.epochs, cfg.seed);
    std::vector<int> preds = detail::predict(params, cfg.encoder, sr.test);
    std::vector<int> truth;
    for (const auto& w : sr.test.windows) truth.push_back(w.label);
    out.macro_f1 = mean_f1(preds, truth, ws.num_classes());
    out.manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.params = std::move(params);
    return out;
}

// Repetition protocol: each repetition redraws the split with a derived seed.
template <typename T>
RunManifest run_repetitions(const WindowSet& ws, const EvalConfig& cfg,
                            const ParamMap<T>* encoder_params,
                            const AugmentSpec* aug = nullptr) {
    cfg.validate();
    if (cfg.protocol != Protocol::supervised && encoder_params == nullptr)
        throw ConfigError("protocol '" + to_string(cfg.protocol) +
                          "' needs a pretrained encoder checkpoint");
    RunManifest man;
    man.kind = "eval";
    man.seed = cfg.seed;
    man.config["protocol"] = to_string(cfg.protocol);
    man.config["label_fraction"] = cfg.label_fraction;
    man.config["repetitions"] = cfg.repetitions;
    man.config["epochs"] = cfg.epochs;
    man.config["standardize"] = cfg.standardize;
    man.config["encoder"] = cfg.encoder.to_json();
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < cfg.repetitions; ++r) {
        EvalConfig rep_cfg = cfg;
        rep_cfg.seed = Rng::mix(cfg.seed, static_cast<uint64_t>(r));
        double score = 0.0;
        switch (cfg.protocol) {
            case Protocol::supervised:
                score = train_supervised<T>(ws, rep_cfg, aug).macro_f1;
                break;
            case Protocol::linear:
                score = linear_evaluate<T>(*encoder_params, ws, rep_cfg).macro_f1;
                break;
            case Protocol::finetune:
                score = fine_tune<T>(*encoder_params, ws, rep_cfg).macro_f1;
                break;
        }
        man.repetition_scores.push_back(score);
    }
    man.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return man;
}

}  // namespace senres
