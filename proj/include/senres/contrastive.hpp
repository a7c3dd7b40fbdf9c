#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "senres/augment.hpp"
#include "senres/dataset.hpp"
#include "senres/encoder.hpp"
#include "senres/manifest.hpp"
#include "senres/optim.hpp"
#include "senres/tape.hpp"

namespace senres {

// --- losses -----------------------------------------------------------------

// Temperature-scaled contrastive loss over in-batch pairs. Rows of z must be
// arranged so (2k, 2k+1) are the two views of sample k. Cosine similarities
// come from l2-normalized rows; each row's partner is its target and the
// softmax denominator runs over every other row, the partner included.
template <typename T>
Var<T> nt_xent(Tape<T>& tape, Var<T> z, double tau) {
    if (tau <= 0.0) throw InvalidParams("nt_xent: temperature must be positive");
    const Tensor<T>& zv = tape.value(z);
    if (zv.rank() != 2) throw ShapeError("nt_xent: z must be rank 2");
    int64_t rows = zv.shape[0];
    if (rows < 2 || rows % 2 != 0)
        throw ShapeError("nt_xent: row count must be even and >= 2, got " +
                         std::to_string(rows));
    Var<T> zn = tape.l2_normalize_rows(z);
    Var<T> sims = tape.scale(tape.matmul_nt(zn, zn), 1.0 / tau);
    std::vector<int64_t> targets(static_cast<size_t>(rows));
    for (int64_t i = 0; i < rows; ++i) targets[static_cast<size_t>(i)] = i ^ 1;
    return tape.cross_entropy_rows(sims, std::move(targets), /*mask_diag=*/true);
}

template <typename T>
T nt_xent_value(const Tensor<T>& z, double tau) {
    Tape<T> tape;
    Var<T> v = tape.leaf(z);
    return tape.value(nt_xent(tape, v, tau)).data[0];
}

// FIFO ring of momentum-encoded keys, shape (K, P). After K pushes the
// oldest entries are overwritten first.
template <typename T>
struct Queue {
    int64_t capacity = 0;
    int64_t dim = 0;
    Tensor<T> buf;
    int64_t cursor = 0;
    int64_t fill = 0;

    Queue(int64_t k, int64_t p) : capacity(k), dim(p), buf(Tensor<T>::zeros({k, p})) {
        if (k < 1 || p < 1) throw InvalidParams("Queue: capacity and dim must be positive");
    }

    void push(const Tensor<T>& keys) {
        if (keys.rank() != 2 || keys.shape[1] != dim)
            throw ShapeError("queue_push: keys must be (B x " + std::to_string(dim) + ")");
        int64_t b = keys.shape[0];
        if (b > capacity)
            throw InvalidParams("queue_push: batch " + std::to_string(b) +
                                " exceeds capacity " + std::to_string(capacity));
        for (int64_t i = 0; i < b; ++i) {
            for (int64_t j = 0; j < dim; ++j)
                buf.data[static_cast<size_t>(cursor * dim + j)] =
                    keys.data[static_cast<size_t>(i * dim + j)];
            cursor = (cursor + 1) % capacity;
        }
        fill = std::min(capacity, fill + b);
    }

    // Stored keys, oldest first.
    Tensor<T> snapshot_fifo() const {
        Tensor<T> out = Tensor<T>::zeros({fill, dim});
        int64_t start = fill < capacity ? 0 : cursor;
        for (int64_t i = 0; i < fill; ++i) {
            int64_t src = (start + i) % capacity;
            for (int64_t j = 0; j < dim; ++j)
                out.data[static_cast<size_t>(i * dim + j)] =
                    buf.data[static_cast<size_t>(src * dim + j)];
        }
        return out;
    }
};

template <typename T>
void queue_push(Queue<T>& q, const Tensor<T>& keys) {
    q.push(keys);
}

// Cross-entropy of each query against its positive key (class 0) and the
// queue contents. Keys and queue enter as tape constants, so no gradient
// ever flows into them; only the query path is differentiated.
template <typename T>
Var<T> info_nce(Tape<T>& tape, Var<T> q, const Tensor<T>& k_pos, const Queue<T>& queue,
                double tau) {
    if (tau <= 0.0) throw InvalidParams("info_nce: temperature must be positive");
    // Note: tape.value() references are invalidated by node creation, so the
    // shape is copied out before any push below.
    Shape qshape = tape.value(q).shape;
    if (qshape.size() != 2 || k_pos.rank() != 2 || qshape != k_pos.shape)
        throw ShapeError("info_nce: q and k_pos must be matching (B x P)");
    if (queue.fill == 0) throw InvalidState("info_nce: queue is empty");
    if (queue.dim != qshape[1]) throw ShapeError("info_nce: queue dim mismatch");
    Var<T> kc = tape.constant(k_pos);
    Var<T> qc = tape.constant(queue.snapshot_fifo());
    Var<T> pos = tape.rowwise_dot(q, kc);                       // (B x 1)
    Var<T> neg = tape.matmul_nt(q, qc);                         // (B x fill)
    Var<T> logits = tape.scale(tape.concat_cols(pos, neg), 1.0 / tau);
    std::vector<int64_t> targets(static_cast<size_t>(qshape[0]), 0);
    return tape.cross_entropy_rows(logits, std::move(targets), /*mask_diag=*/false);
}

// xi <- m * xi + (1 - m) * theta, elementwise over the shared name set.
template <typename T>
void momentum_update(const ParamMap<T>& theta, ParamMap<T>& xi, double m) {
    if (m < 0.0 || m >= 1.0) throw InvalidParams("momentum_update: m must be in [0,1)");
    if (theta.size() != xi.size())
        throw ShapeError("momentum_update: parameter name sets differ in size");
    auto ti = theta.begin();
    auto xi_it = xi.begin();
    for (; ti != theta.end(); ++ti, ++xi_it) {
        if (ti->first != xi_it->first)
            throw ShapeError("momentum_update: name mismatch '" + ti->first + "' vs '" +
                             xi_it->first + "'");
        if (ti->second.shape != xi_it->second.shape)
            throw ShapeError("momentum_update: shape mismatch for '" + ti->first + "'");
        T mm = static_cast<T>(m);
        for (size_t e = 0; e < ti->second.data.size(); ++e)
            xi_it->second.data[e] = mm * xi_it->second.data[e] +
                                    (T(1) - mm) * ti->second.data[e];
    }
}

// --- pretraining ------------------------------------------------------------

enum class Framework { simclr, moco };

inline std::string to_string(Framework f) { return f == Framework::simclr ? "simclr" : "moco"; }

inline Framework framework_from_string(const std::string& s) {
    if (s == "simclr") return Framework::simclr;
    if (s == "moco") return Framework::moco;
    throw ConfigError("unknown framework '" + s + "' (expected simclr or moco)");
}

struct PretrainConfig {
    Framework framework = Framework::simclr;
    AugmentSpec branch1 = AugmentSpec::make(AugKind::identity);
    AugmentSpec branch2 = AugmentSpec::make(AugKind::resample);
    double tau = 0.1;
    int64_t batch = 2048;
    int64_t epochs = 200;
    double lr = 1e-3;
    int64_t queue_capacity = 8192;  // moco
    double momentum = 0.999;        // moco
    uint64_t seed = 0;
    bool standardize = false;  // z-score channels over the pretraining set
    EncoderConfig encoder;
    ProjectionConfig projection = ProjectionConfig::simclr_default();
    int workers = 0;  // 0: resolve via default_workers()

    void validate() const {
        if (tau <= 0.0) throw ConfigError("pretrain: temperature must be positive");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("pretrain: m must be in [0,1)");
        if (framework == Framework::simclr && batch < 2)
            throw ConfigError("pretrain: batch must be >= 2 for simclr");
        if (batch < 1 || epochs < 0) throw ConfigError("pretrain: bad batch/epoch counts");
        if (queue_capacity < 1) throw ConfigError("pretrain: queue capacity must be positive");
        branch1.validate();
        branch2.validate();
        projection.validate();
    }

    static PretrainConfig simclr_paper() {
        PretrainConfig c;
        c.framework = Framework::simclr;
        c.tau = 0.1;
        c.batch = 2048;
        c.projection = ProjectionConfig::simclr_default();
        return c;
    }

    static PretrainConfig moco_paper() {
        PretrainConfig c;
        c.framework = Framework::moco;
        c.tau = 0.07;
        c.batch = 1024;
        c.queue_capacity = 8192;
        c.momentum = 0.999;
        c.projection = ProjectionConfig::moco_default();
        return c;
    }

    static PretrainConfig simclr_desk() {
        PretrainConfig c;
        c.framework = Framework::simclr;
        c.tau = 0.1;
        c.batch = 128;
        c.epochs = 50;
        c.encoder = EncoderConfig::desk();
        c.projection = ProjectionConfig::desk();
        return c;
    }

    static PretrainConfig moco_desk() {
        PretrainConfig c;
        c.framework = Framework::moco;
        c.tau = 0.07;
        c.batch = 64;
        c.epochs = 30;
        c.queue_capacity = 512;
        c.momentum = 0.999;
        c.encoder = EncoderConfig::desk();
        c.projection = ProjectionConfig::desk();
        return c;
    }
};

template <typename T>
struct PretrainResult {
    ParamMap<T> encoder_params;
    RunManifest manifest;
};

namespace detail {

// Per-window augmentation stream: deterministic in (seed, epoch, window,
// branch) regardless of worker count or batch order.
inline Rng window_rng(uint64_t seed, int64_t epoch, size_t window_idx, int branch) {
    uint64_t id = (static_cast<uint64_t>(epoch) << 33) |
                  (static_cast<uint64_t>(branch) << 32) | static_cast<uint64_t>(window_idx);
    return Rng::stream(seed, id);
}

inline bool is_encoder_param(const std::string& name) {
    return name.rfind("conv", 0) == 0 || name.rfind("lstm", 0) == 0;
}

template <typename T>
ParamMap<T> encoder_only(const ParamMap<T>& all) {
    ParamMap<T> out;
    for (const auto& [name, t] : all)
        if (is_encoder_param(name)) out.emplace(name, t);
    return out;
}

template <typename T>
void check_finite_loss(T loss, int64_t epoch) {
    if (!std::isfinite(static_cast<double>(loss)))
        throw NumericError("training loss became non-finite at epoch " +
                           std::to_string(epoch + 1));
}

}  // namespace detail

// Self-supervised pretraining over unlabeled windows. Returns the trained
// encoder parameters only; projection heads are discarded. Augmentation
// draws, batch order, and the optimizer trajectory are fully determined by
// cfg.seed.
template <typename T>
PretrainResult<T> pretrain(const WindowSet& data_in, const PretrainConfig& cfg) {
    cfg.validate();
    if (data_in.windows.empty()) throw InvalidParams("pretrain: empty dataset");
    WindowSet standardized;
    if (cfg.standardize) standardized = standardize(data_in, channel_stats(data_in));
    const WindowSet& data = cfg.standardize ? standardized : data_in;
    // SimCLR drops incomplete batches, so a dataset smaller than one batch
    // would train on nothing at all.
    if (cfg.framework == Framework::simclr && cfg.epochs > 0 &&
        data.windows.size() < static_cast<size_t>(cfg.batch))
        throw ConfigError("pretrain: dataset (" + std::to_string(data.windows.size()) +
                          " windows) is smaller than one simclr batch (" +
                          std::to_string(cfg.batch) + ")");
    data.validate();
    int64_t window_len = data.windows[0].timesteps;
    int64_t channels = data.windows[0].channels;
    cfg.encoder.validate(window_len);
    auto t0 = std::chrono::steady_clock::now();

    Rng init_rng = Rng::stream(cfg.seed, 1);
    ParamMap<T> params = init_encoder_params<T>(cfg.encoder, channels, init_rng);
    append_projection_params<T>(params, cfg.encoder.representation_dim(), cfg.projection,
                                init_rng);

    RunManifest man;
    man.kind = "pretrain";
    man.seed = cfg.seed;
    man.config["framework"] = to_string(cfg.framework);
    man.config["tau"] = cfg.tau;
    man.config["batch"] = cfg.batch;
    man.config["epochs"] = cfg.epochs;
    man.config["lr"] = cfg.lr;
    man.config["branch1"] = cfg.branch1.to_json();
    man.config["branch2"] = cfg.branch2.to_json();
    man.config["encoder"] = cfg.encoder.to_json();
    man.config["projection"] = cfg.projection.to_json();
    man.config["standardize"] = cfg.standardize;
    if (cfg.framework == Framework::moco) {
        man.config["queue_capacity"] = cfg.queue_capacity;
        man.config["momentum"] = cfg.momentum;
    }

    AdamState<T> opt;
    opt.cfg.lr = static_cast<T>(cfg.lr);
    Rng drop_rng = Rng::stream(cfg.seed, 2);
    int workers = cfg.workers > 0 ? cfg.workers : default_workers();

    ParamMap<T> xi;
    Queue<T> queue(cfg.queue_capacity, cfg.projection.output_dim());
    if (cfg.framework == Framework::moco) xi = params;

    std::vector<size_t> order(data.windows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::stream(cfg.seed, 1000 + static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        int64_t loss_batches = 0;

        for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.batch)) {
            size_t bsz = std::min(static_cast<size_t>(cfg.batch), order.size() - pos);
            if (cfg.framework == Framework::simclr && bsz < static_cast<size_t>(cfg.batch))
                break;  // pair bookkeeping needs full batches; drop the remainder
            std::vector<size_t> batch_idx(order.begin() + static_cast<int64_t>(pos),
                                          order.begin() + static_cast<int64_t>(pos + bsz));

            std::vector<Window> view1(bsz), view2(bsz);
            parallel_for(static_cast<int64_t>(bsz), workers, [&](int64_t i) {
                size_t wi = batch_idx[static_cast<size_t>(i)];
                Rng r1 = detail::window_rng(cfg.seed, epoch, wi, 0);
                Rng r2 = detail::window_rng(cfg.seed, epoch, wi, 1);
                view1[static_cast<size_t>(i)] = apply(cfg.branch1, data.windows[wi], r1);
                view2[static_cast<size_t>(i)] = apply(cfg.branch2, data.windows[wi], r2);
            });

            if (cfg.framework == Framework::simclr) {
                std::vector<Window> interleaved;
                interleaved.reserve(2 * bsz);
                for (size_t i = 0; i < bsz; ++i) {
                    interleaved.push_back(std::move(view1[i]));
                    interleaved.push_back(std::move(view2[i]));
                }
                Tape<T> tape;
                BoundParams<T> bound = bind_params(tape, params, true);
                Var<T> x = tape.constant(windows_to_batch<T>(interleaved));
                Var<T> h = encode(tape, x, bound, cfg.encoder, true, drop_rng);
                Var<T> z = project(tape, h, bound, cfg.projection);
                Var<T> loss = nt_xent(tape, z, cfg.tau);
                T lv = tape.value(loss).data[0];
                detail::check_finite_loss(lv, epoch);
                loss_sum += static_cast<double>(lv);
                ++loss_batches;
                tape.backward(loss);
                auto grads = collect_grads(bound);
                adam_step(params, grads, opt);
            } else {
                // keys from the momentum encoder, no gradient
                Tensor<T> keys;
                {
                    Tape<T> ktape;
                    BoundParams<T> kbound = bind_params(ktape, xi, false);
                    Var<T> kx = ktape.constant(windows_to_batch<T>(view2));
                    Var<T> kh = encode(ktape, kx, kbound, cfg.encoder, false, drop_rng);
                    Var<T> kz = project(ktape, kh, kbound, cfg.projection);
                    keys = l2_normalize(ktape.value(kz));
                }
                queue.push(keys);

                Tape<T> tape;
                BoundParams<T> bound = bind_params(tape, params, true);
                Var<T> x = tape.constant(windows_to_batch<T>(view1));
                Var<T> h = encode(tape, x, bound, cfg.encoder, true, drop_rng);
                Var<T> z = project(tape, h, bound, cfg.projection);
                Var<T> q = tape.l2_normalize_rows(z);
                Var<T> loss = info_nce(tape, q, keys, queue, cfg.tau);
                T lv = tape.value(loss).data[0];
                detail::check_finite_loss(lv, epoch);
                loss_sum += static_cast<double>(lv);
                ++loss_batches;
                tape.backward(loss);
                auto grads = collect_grads(bound);
                adam_step(params, grads, opt);
                momentum_update(params, xi, cfg.momentum);
            }
        }
        man.epoch_losses.push_back(loss_batches > 0 ? loss_sum / static_cast<double>(loss_batches)
                                                    : 0.0);
    }

    PretrainResult<T> res;
    res.encoder_params = detail::encoder_only(params);
    res.manifest = std::move(man);
    res.manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace senres
