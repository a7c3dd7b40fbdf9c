#pragma once

#include <string>
#include <vector>

#include "senres/common.hpp"
#include "senres/rng.hpp"
#include "senres/window.hpp"

namespace senres {

enum class Interp { linear, lagrange, cubic_spline };
enum class BlockMode { A, B };
enum class DrawPolicy { fixed, random_per_call };

// Simulated sampling-frequency change: insert M interpolated nodes per gap
// (the window speeds up by factor M+1), then take a strided slice at a random
// offset. draw_policy random_per_call redraws M on {1,2,3} and N on {0..M-1}
// on every application.
struct ResampleParams {
    int M = 1;
    int N = 0;
    Interp interpolation = Interp::linear;
    BlockMode mode = BlockMode::A;
    DrawPolicy draw_policy = DrawPolicy::fixed;

    void validate() const {
        if (M < 1) throw InvalidParams("ResampleParams: M must be >= 1, got " + std::to_string(M));
        if (N < 0 || N > M - 1)
            throw InvalidParams("ResampleParams: N must be in [0, M-1], got N=" +
                                std::to_string(N) + " with M=" + std::to_string(M));
    }
};

namespace detail {

// Cubic Lagrange polynomial through (xs[0..3], ys[0..3]) evaluated at t.
inline double lagrange4(const double* xs, const double* ys, double t) {
    double acc = 0.0;
    for (int i = 0; i < 4; ++i) {
        double term = ys[i];
        for (int j = 0; j < 4; ++j) {
            if (j == i) continue;
            term *= (t - xs[j]) / (xs[i] - xs[j]);
        }
        acc += term;
    }
    return acc;
}

// Natural cubic spline through ys at integer knots 0..n-1, evaluated at t.
// Second derivatives from the standard tridiagonal system (Thomas solve).
inline double natural_spline_eval(const double* ys, int n, double t) {
    std::vector<double> m(static_cast<size_t>(n), 0.0);
    int inner = n - 2;
    if (inner > 0) {
        std::vector<double> diag(static_cast<size_t>(inner), 4.0);
        std::vector<double> rhs(static_cast<size_t>(inner));
        for (int i = 0; i < inner; ++i) rhs[static_cast<size_t>(i)] = 6.0 * (ys[i + 2] - 2.0 * ys[i + 1] + ys[i]);
        for (int i = 1; i < inner; ++i) {
            double w = 1.0 / diag[static_cast<size_t>(i - 1)];
            diag[static_cast<size_t>(i)] -= w;
            rhs[static_cast<size_t>(i)] -= w * rhs[static_cast<size_t>(i - 1)];
        }
        for (int i = inner - 1; i >= 0; --i) {
            double v = rhs[static_cast<size_t>(i)];
            if (i + 1 < inner) v -= m[static_cast<size_t>(i + 2)];
            m[static_cast<size_t>(i + 1)] = v / diag[static_cast<size_t>(i)];
        }
    }
    int j = static_cast<int>(t);
    if (j < 0) j = 0;
    if (j > n - 2) j = n - 2;
    double u = t - j;
    double mj = m[static_cast<size_t>(j)], mj1 = m[static_cast<size_t>(j + 1)];
    return mj * (1.0 - u) * (1.0 - u) * (1.0 - u) / 6.0 + mj1 * u * u * u / 6.0 +
           (ys[j] - mj / 6.0) * (1.0 - u) + (ys[j + 1] - mj1 / 6.0) * u;
}

}  // namespace detail

// Insert M equally spaced linear nodes into every gap. Output length
// L = (M+1)(I-1)+1 with originals preserved at indices (M+1)*i.
inline std::vector<double> upsample_linear(const std::vector<double>& seq, int M) {
    int64_t I = static_cast<int64_t>(seq.size());
    if (I < 2) throw InputTooShort("upsample_linear: need at least 2 samples, got " +
                                   std::to_string(I));
    if (M < 1) throw InvalidParams("upsample_linear: M must be >= 1");
    int64_t L = static_cast<int64_t>(M + 1) * (I - 1) + 1;
    std::vector<double> out(static_cast<size_t>(L));
    for (int64_t i = 0; i + 1 < I; ++i) {
        double a = seq[static_cast<size_t>(i)], b = seq[static_cast<size_t>(i + 1)];
        int64_t base = (M + 1) * i;
        out[static_cast<size_t>(base)] = a;
        for (int j = 1; j <= M; ++j)
            out[static_cast<size_t>(base + j)] =
                a + (b - a) * (static_cast<double>(j) / (M + 1));
    }
    out[static_cast<size_t>(L - 1)] = seq[static_cast<size_t>(I - 1)];
    return out;
}

// Blockwise nonlinear insertion. The sequence is cut into disjoint blocks of
// 4 (mode A) or 8 (mode B) consecutive samples; one new point goes midway
// between the 2nd and 3rd sample of each 4-block, and between the 2nd-3rd,
// 4th-5th, 6th-7th of each 8-block. The inserted value comes from a cubic
// fitted over the block: a Lagrange cubic through the 4 nearest block samples
// or a natural cubic spline over the whole block. Trailing samples that do
// not fill a block pass through unchanged.
inline std::vector<double> upsample_nonlinear(const std::vector<double>& seq, Interp kernel,
                                              BlockMode mode) {
    if (kernel != Interp::lagrange && kernel != Interp::cubic_spline)
        throw InvalidParams("upsample_nonlinear: kernel must be lagrange or cubic_spline");
    int64_t I = static_cast<int64_t>(seq.size());
    int block = mode == BlockMode::A ? 4 : 8;
    if (I < block)
        throw InputTooShort("upsample_nonlinear: need at least " + std::to_string(block) +
                            " samples for this mode, got " + std::to_string(I));
    // Insertion parameters within a block, between local samples (k, k+1).
    static const double insA[] = {1.5};
    static const double insB[] = {1.5, 3.5, 5.5};
    const double* ins = mode == BlockMode::A ? insA : insB;
    int nins = mode == BlockMode::A ? 1 : 3;

    std::vector<double> out;
    out.reserve(static_cast<size_t>(I + (I / block) * nins));
    int64_t nblocks = I / block;
    for (int64_t b = 0; b < nblocks; ++b) {
        const double* y = seq.data() + b * block;
        int next_ins = 0;
        for (int k = 0; k < block; ++k) {
            out.push_back(y[k]);
            if (next_ins < nins && static_cast<int>(ins[next_ins]) == k) {
                double t = ins[next_ins];
                double v;
                if (kernel == Interp::cubic_spline) {
                    v = detail::natural_spline_eval(y, block, t);
                } else {
                    // 4 nearest samples inside the block, clamped to its ends
                    int lo = static_cast<int>(t) - 1;
                    if (lo < 0) lo = 0;
                    if (lo > block - 4) lo = block - 4;
                    double xs[4], ys[4];
                    for (int q = 0; q < 4; ++q) {
                        xs[q] = lo + q;
                        ys[q] = y[lo + q];
                    }
                    v = detail::lagrange4(xs, ys, t);
                }
                out.push_back(v);
                ++next_ins;
            }
        }
    }
    for (int64_t i = nblocks * block; i < I; ++i) out.push_back(seq[static_cast<size_t>(i)]);
    return out;
}

// Largest valid 1-based start offset for a strided take of I samples.
inline int64_t downsample_offset_range(int64_t L, int64_t I, int N) {
    if (N < 0) throw InvalidParams("downsample: N must be >= 0");
    if (I < 1) throw InvalidParams("downsample: output length must be >= 1");
    int64_t stride = static_cast<int64_t>(N) + 1;
    return L - (I - 1) * stride;
}

// Take I samples starting at 1-based offset s with stride N+1.
inline std::vector<double> downsample_at(const std::vector<double>& seq, int64_t I, int N,
                                         int64_t s) {
    int64_t L = static_cast<int64_t>(seq.size());
    int64_t s_max = downsample_offset_range(L, I, N);
    if (s_max < 1)
        throw InvalidParams("downsample: stride " + std::to_string(N + 1) +
                            " too large for length " + std::to_string(L) + " -> " +
                            std::to_string(I));
    if (s < 1 || s > s_max) throw InvalidParams("downsample: start offset out of range");
    int64_t stride = static_cast<int64_t>(N) + 1;
    std::vector<double> out(static_cast<size_t>(I));
    for (int64_t i = 0; i < I; ++i)
        out[static_cast<size_t>(i)] = seq[static_cast<size_t>(s - 1 + i * stride)];
    return out;
}

// As above with the start offset drawn uniformly from [1, s_max].
inline std::vector<double> downsample(const std::vector<double>& seq, int64_t I, int N,
                                      Rng& rng) {
    int64_t s_max = downsample_offset_range(static_cast<int64_t>(seq.size()), I, N);
    if (s_max < 1)
        throw InvalidParams("downsample: stride " + std::to_string(N + 1) +
                            " too large for length " + std::to_string(seq.size()) + " -> " +
                            std::to_string(I));
    int64_t s = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(s_max)));
    return downsample_at(seq, I, N, s);
}

// Full resampling transform. One (M, N, start) draw is shared by every
// channel so all axes stay phase-locked, as a real sampling-rate change
// would. Draw order: M, then N (both only under random_per_call), then start.
// Nonlinear kernels use the blockwise insertion pattern and then crop a
// random contiguous run back to the original length.
inline Window resample(const Window& w, const ResampleParams& p, Rng& rng) {
    w.validate_shape();
    p.validate();
    int M = p.M, N = p.N;
    if (p.draw_policy == DrawPolicy::random_per_call) {
        M = 1 + static_cast<int>(rng.below(3));
        N = static_cast<int>(rng.below(static_cast<uint64_t>(M)));
    }
    Window out = w;
    int64_t I = w.timesteps;
    if (p.interpolation == Interp::linear) {
        int64_t L = static_cast<int64_t>(M + 1) * (I - 1) + 1;
        int64_t s_max = downsample_offset_range(L, I, N);
        if (s_max < 1)
            throw InvalidParams("resample: (M=" + std::to_string(M) + ", N=" + std::to_string(N) +
                                ") leaves no valid start offset for T=" + std::to_string(I));
        int64_t s = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(s_max)));
        for (int64_t c = 0; c < w.channels; ++c)
            out.set_channel(c, downsample_at(upsample_linear(w.channel(c), M), I, N, s));
    } else {
        int block = p.mode == BlockMode::A ? 4 : 8;
        int nins = p.mode == BlockMode::A ? 1 : 3;
        int64_t L = I + (I / block) * nins;
        int64_t s_max = L - I + 1;
        int64_t s = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(s_max)));
        for (int64_t c = 0; c < w.channels; ++c)
            out.set_channel(c, downsample_at(upsample_nonlinear(w.channel(c), p.interpolation,
                                                                p.mode),
                                             I, 0, s));
    }
    return out;
}

inline std::string to_string(Interp k) {
    switch (k) {
        case Interp::linear: return "linear";
        case Interp::lagrange: return "lagrange";
        case Interp::cubic_spline: return "cubic_spline";
    }
    return "?";
}

inline Interp interp_from_string(const std::string& s) {
    if (s == "linear") return Interp::linear;
    if (s == "lagrange") return Interp::lagrange;
    if (s == "cubic_spline") return Interp::cubic_spline;
    throw ConfigError("unknown interpolation kernel '" + s + "'");
}

inline std::string to_string(BlockMode m) { return m == BlockMode::A ? "A" : "B"; }

inline BlockMode block_mode_from_string(const std::string& s) {
    if (s == "A") return BlockMode::A;
    if (s == "B") return BlockMode::B;
    throw ConfigError("unknown block mode '" + s + "' (expected A or B)");
}

inline std::string to_string(DrawPolicy p) {
    return p == DrawPolicy::fixed ? "fixed" : "random_per_call";
}

inline DrawPolicy draw_policy_from_string(const std::string& s) {
    if (s == "fixed") return DrawPolicy::fixed;
    if (s == "random_per_call") return DrawPolicy::random_per_call;
    throw ConfigError("unknown draw policy '" + s + "'");
}

}  // namespace senres
