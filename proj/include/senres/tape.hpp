#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "senres/rng.hpp"
#include "senres/tensor.hpp"

namespace senres {

// ---------------------------------------------------------------------------
// Reverse-mode autodiff over a linear tape. Operations append nodes in
// execution order; backward() walks them in exact reverse order, so no
// topological sort is needed (inputs always precede outputs). A tape may be
// backward-traversed exactly once; reuse raises InvalidState so silent
// gradient accumulation bugs cannot hide.
// ---------------------------------------------------------------------------

template <typename T>
class Tape;

template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    int32_t id = -1;

    const Tensor<T>& value() const { return tape->value(*this); }
    const std::vector<T>& grad() const { return tape->grad(*this); }
};

namespace detail {

// C(m x n) += A(m x k) * B(k x n)
template <typename T>
void gemm_nn_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        const T* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            T av = arow[p];
            const T* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(m x n) += A(m x k) * B(n x k)^T. B is transposed into scratch first so
// the inner loop runs over independent contiguous elements; the per-element
// accumulation order over p is unchanged.
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    std::vector<T> bt(static_cast<size_t>(k) * static_cast<size_t>(n));
    for (int64_t j = 0; j < n; ++j)
        for (int64_t p = 0; p < k; ++p)
            bt[static_cast<size_t>(p * n + j)] = b[j * k + p];
    gemm_nn_acc(a, bt.data(), c, m, k, n);
}

// C(m x n) += A(k x m)^T * B(k x n)
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t p = 0; p < k; ++p) {
        const T* arow = a + p * m;
        const T* brow = b + p * n;
        for (int64_t i = 0; i < m; ++i) {
            T av = arow[i];
            T* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

template <typename T>
class Tape {
   public:
    struct Node {
        Tensor<T> value;
        std::vector<T> grad;  // sized iff requires_grad
        bool requires_grad = false;
        std::function<void(Tape&)> backward;  // empty for leaves/constants
    };

    // --- leaves -----------------------------------------------------------

    Var<T> leaf(Tensor<T> t) {
        bool rg = t.requires_grad;
        return push(std::move(t), rg, nullptr);
    }

    Var<T> constant(Tensor<T> t) {
        t.requires_grad = false;
        return push(std::move(t), false, nullptr);
    }

    // --- access -----------------------------------------------------------

    const Tensor<T>& value(Var<T> v) const { return nodes_[check(v)].value; }
    const std::vector<T>& grad(Var<T> v) const {
        const Node& n = nodes_[check(v)];
        if (!n.requires_grad) throw InvalidState("grad requested on a non-grad node");
        return n.grad;
    }
    std::vector<T>& grad_mut(Var<T> v) { return nodes_[check(v)].grad; }
    size_t size() const { return nodes_.size(); }

    // --- elementwise ------------------------------------------------------

    Var<T> add(Var<T> a, Var<T> b) {
        require_same_shape(val(a), val(b), "add");
        Tensor<T> out = val(a);
        const T* pb = val(b).data.data();
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += pb[i];
        return binary_elementwise(std::move(out), a, b, /*mul_b=*/nullptr);
    }

    Var<T> sub(Var<T> a, Var<T> b) {
        require_same_shape(val(a), val(b), "sub");
        Tensor<T> out = val(a);
        const T* pb = val(b).data.data();
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= pb[i];
        bool rg = rgrad(a) || rgrad(b);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [a, b, o](Tape& tp) {
            const std::vector<T>& g = tp.nodes_[o.id].grad;
            if (tp.rgrad(a)) {
                std::vector<T>& ga = tp.nodes_[a.id].grad;
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (tp.rgrad(b)) {
                std::vector<T>& gb = tp.nodes_[b.id].grad;
                for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
        return o;
    }

    Var<T> mul(Var<T> a, Var<T> b) {
        require_same_shape(val(a), val(b), "mul");
        Tensor<T> out = val(a);
        const T* pb = val(b).data.data();
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= pb[i];
        bool rg = rgrad(a) || rgrad(b);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [a, b, o](Tape& tp) {
            const std::vector<T>& g = tp.nodes_[o.id].grad;
            const T* va = tp.val(a).data.data();
            const T* vb = tp.val(b).data.data();
            if (tp.rgrad(a)) {
                std::vector<T>& ga = tp.nodes_[a.id].grad;
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
            }
            if (tp.rgrad(b)) {
                std::vector<T>& gb = tp.nodes_[b.id].grad;
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
            }
        });
        return o;
    }

    Var<T> scale(Var<T> a, double k) {
        Tensor<T> out = val(a);
        for (T& x : out.data) x = static_cast<T>(x * k);
        bool rg = rgrad(a);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [a, o, k](Tape& tp) {
            const std::vector<T>& g = tp.nodes_[o.id].grad;
            std::vector<T>& ga = tp.nodes_[a.id].grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += static_cast<T>(g[i] * k);
        });
        return o;
    }

    // x: (..., C) plus bias (C), broadcast over leading dims.
    Var<T> add_bias(Var<T> x, Var<T> bias) {
        const Tensor<T>& xv = val(x);
        const Tensor<T>& bv = val(bias);
        if (bv.rank() != 1 || xv.rank() < 1 || xv.shape.back() != bv.shape[0])
            throw ShapeError("add_bias: bias " + shape_str(bv.shape) +
                             " does not match trailing dim of " + shape_str(xv.shape));
        int64_t c = bv.shape[0];
        int64_t rows = xv.numel() / c;
        Tensor<T> out = xv;
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < c; ++j) out.data[static_cast<size_t>(r * c + j)] += bv.data[static_cast<size_t>(j)];
        bool rg = rgrad(x) || rgrad(bias);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [x, bias, o, rows, c](Tape& tp) {
            const std::vector<T>& g = tp.nodes_[o.id].grad;
            if (tp.rgrad(x)) {
                std::vector<T>& gx = tp.nodes_[x.id].grad;
                for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            }
            if (tp.rgrad(bias)) {
                std::vector<T>& gb = tp.nodes_[bias.id].grad;
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < c; ++j) gb[static_cast<size_t>(j)] += g[static_cast<size_t>(r * c + j)];
            }
        });
        return o;
    }

    Var<T> relu(Var<T> a) {
        Tensor<T> out = val(a);
        for (T& x : out.data) x = x > T(0) ? x : T(0);
        return unary_saved(std::move(out), a, [](T y, T g) { return y > T(0) ? g : T(0); });
    }

    Var<T> sigmoid(Var<T> a) {
        Tensor<T> out = val(a);
        for (T& x : out.data) x = T(1) / (T(1) + std::exp(-x));
        return unary_saved(std::move(out), a, [](T y, T g) { return g * y * (T(1) - y); });
    }

    Var<T> tanh_(Var<T> a) {
        Tensor<T> out = val(a);
        for (T& x : out.data) x = std::tanh(x);
        return unary_saved(std::move(out), a, [](T y, T g) { return g * (T(1) - y * y); });
    }

    // Inverted dropout; mask is drawn from rng and reused in backward.
    Var<T> dropout(Var<T> a, double rate, Rng& rng) {
        if (rate < 0.0 || rate >= 1.0) throw InvalidParams("dropout: rate must be in [0,1)");
        Tensor<T> out = val(a);
        auto mask = std::make_shared<std::vector<T>>(out.data.size());
        T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
        for (size_t i = 0; i < out.data.size(); ++i) {
            T m = rng.uniform01() < rate ? T(0) : keep_scale;
            (*mask)[i] = m;
            out.data[i] *= m;
        }
        bool rg = rgrad(a);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [a, o, mask](Tape& tp) {
            const std::vector<T>& g = tp.nodes_[o.id].grad;
            std::vector<T>& ga = tp.nodes_[a.id].grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*mask)[i];
        });
        return o;
    }

    // --- matrix ops -------------------------------------------------------

    Var<T> matmul(Var<T> a, Var<T> b) {
        const Tensor<T>& av = val(a);
        const Tensor<T>& bv = val(b);
        if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0])
            throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape) + " x " +
                             shape_str(bv.shape));
        int64_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
        Tensor<T> out = Tensor<T>::zeros({m, n});
        detail::gemm_nn_acc(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
        bool rg = rgrad(a) || rgrad(b);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [a, b, o, m, k, n](Tape& tp) {
            const T* g = tp.nodes_[o.id].grad.data();
            if (tp.rgrad(a))  // dA += G * B^T
                detail::gemm_nt_acc(g, tp.val(b).data.data(), tp.nodes_[a.id].grad.data(), m, n, k);
            if (tp.rgrad(b))  // dB += A^T * G
                detail::gemm_tn_acc(tp.val(a).data.data(), g, tp.nodes_[b.id].grad.data(), k, m, n);
        });
        return o;
    }

    // a(m x k) * b(n x k)^T -> (m x n); the similarity-matrix workhorse.
    Var<T> matmul_nt(Var<T> a, Var<T> b) {
        const Tensor<T>& av = val(a);
        const Tensor<T>& bv = val(b);
        if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[1])
            throw ShapeError("matmul_nt: incompatible shapes " + shape_str(av.shape) + " x " +
                             shape_str(bv.shape) + "^T");
        int64_t m = av.shape[0], k = av.shape[1], n = bv.shape[0];
        Tensor<T> out = Tensor<T>::zeros({m, n});
        detail::gemm_nt_acc(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
        bool rg = rgrad(a) || rgrad(b);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [a, b, o, m, k, n](Tape& tp) {
            const T* g = tp.nodes_[o.id].grad.data();
            if (tp.rgrad(a))  // dA += G * B
                detail::gemm_nn_acc(g, tp.val(b).data.data(), tp.nodes_[a.id].grad.data(), m, n, k);
            if (tp.rgrad(b))  // dB += G^T * A
                detail::gemm_tn_acc(g, tp.val(a).data.data(), tp.nodes_[b.id].grad.data(), n, m, k);
        });
        return o;
    }

    Var<T> concat_cols(Var<T> a, Var<T> b) {
        const Tensor<T>& av = val(a);
        const Tensor<T>& bv = val(b);
        if (av.rank() != 2 || bv.rank() != 2 || av.shape[0] != bv.shape[0])
            throw ShapeError("concat_cols: row mismatch " + shape_str(av.shape) + " vs " +
                             shape_str(bv.shape));
        int64_t r = av.shape[0], c1 = av.shape[1], c2 = bv.shape[1];
        Tensor<T> out = Tensor<T>::zeros({r, c1 + c2});
        for (int64_t i = 0; i < r; ++i) {
            for (int64_t j = 0; j < c1; ++j) out.at(i, j) = av.at(i, j);
            for (int64_t j = 0; j < c2; ++j) out.at(i, c1 + j) = bv.at(i, j);
        }
        bool rg = rgrad(a) || rgrad(b);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [a, b, o, r, c1, c2](Tape& tp) {
            const Tensor<T>& ov = tp.val(o);
            const T* g = tp.nodes_[o.id].grad.data();
            (void)ov;
            if (tp.rgrad(a)) {
                std::vector<T>& ga = tp.nodes_[a.id].grad;
                for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < c1; ++j) ga[static_cast<size_t>(i * c1 + j)] += g[i * (c1 + c2) + j];
            }
            if (tp.rgrad(b)) {
                std::vector<T>& gb = tp.nodes_[b.id].grad;
                for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < c2; ++j) gb[static_cast<size_t>(i * c2 + j)] += g[i * (c1 + c2) + c1 + j];
            }
        });
        return o;
    }

    // Row-wise dot product of two (r x c) matrices -> (r x 1).
    Var<T> rowwise_dot(Var<T> a, Var<T> b) {
        require_same_shape(val(a), val(b), "rowwise_dot");
        if (val(a).rank() != 2) throw ShapeError("rowwise_dot: expects rank-2 inputs");
        int64_t r = val(a).shape[0], c = val(a).shape[1];
        Tensor<T> out = Tensor<T>::zeros({r, 1});
        for (int64_t i = 0; i < r; ++i) {
            T s = 0;
            for (int64_t j = 0; j < c; ++j) s += val(a).at(i, j) * val(b).at(i, j);
            out.data[static_cast<size_t>(i)] = s;
        }
        bool rg = rgrad(a) || rgrad(b);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [a, b, o, r, c](Tape& tp) {
            const T* g = tp.nodes_[o.id].grad.data();
            const T* va = tp.val(a).data.data();
            const T* vb = tp.val(b).data.data();
            for (int64_t i = 0; i < r; ++i) {
                T gi = g[i];
                if (tp.rgrad(a)) {
                    T* ga = tp.nodes_[a.id].grad.data() + i * c;
                    for (int64_t j = 0; j < c; ++j) ga[j] += gi * vb[i * c + j];
                }
                if (tp.rgrad(b)) {
                    T* gb = tp.nodes_[b.id].grad.data() + i * c;
                    for (int64_t j = 0; j < c; ++j) gb[j] += gi * va[i * c + j];
                }
            }
        });
        return o;
    }

    // Each row scaled to unit Euclidean norm; zero rows stay zero (and get
    // zero gradient), which keeps the op total and deterministic.
    Var<T> l2_normalize_rows(Var<T> a) {
        const Tensor<T>& av = val(a);
        if (av.rank() != 2) throw ShapeError("l2_normalize_rows: expects rank-2 input");
        int64_t r = av.shape[0], c = av.shape[1];
        Tensor<T> out = av;
        auto norms = std::make_shared<std::vector<T>>(static_cast<size_t>(r));
        for (int64_t i = 0; i < r; ++i) {
            T s = 0;
            for (int64_t j = 0; j < c; ++j) s += av.at(i, j) * av.at(i, j);
            T n = std::sqrt(s);
            (*norms)[static_cast<size_t>(i)] = n;
            if (n > T(0))
                for (int64_t j = 0; j < c; ++j) out.at(i, j) /= n;
        }
        bool rg = rgrad(a);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [a, o, r, c, norms](Tape& tp) {
            const T* g = tp.nodes_[o.id].grad.data();
            const T* y = tp.val(o).data.data();
            std::vector<T>& ga = tp.nodes_[a.id].grad;
            for (int64_t i = 0; i < r; ++i) {
                T n = (*norms)[static_cast<size_t>(i)];
                if (n == T(0)) continue;
                T ydotg = 0;
                for (int64_t j = 0; j < c; ++j) ydotg += y[i * c + j] * g[i * c + j];
                for (int64_t j = 0; j < c; ++j)
                    ga[static_cast<size_t>(i * c + j)] += (g[i * c + j] - y[i * c + j] * ydotg) / n;
            }
        });
        return o;
    }

    // --- convolution ------------------------------------------------------

    // Valid cross-correlation along time. input (B x T x Cin),
    // kernels (k x Cin x Cout), bias (Cout) -> (B x T-k+1 x Cout).
    Var<T> conv1d(Var<T> input, Var<T> kernels, Var<T> bias) {
        const Tensor<T>& xv = val(input);
        const Tensor<T>& kv = val(kernels);
        const Tensor<T>& bv = val(bias);
        if (xv.rank() != 3 || kv.rank() != 3 || bv.rank() != 1)
            throw ShapeError("conv1d: expects (BxTxCin), (kxCinxCout), (Cout)");
        int64_t B = xv.shape[0], Tlen = xv.shape[1], cin = xv.shape[2];
        int64_t k = kv.shape[0], cout = kv.shape[2];
        if (kv.shape[1] != cin) throw ShapeError("conv1d: kernel Cin mismatch");
        if (bv.shape[0] != cout) throw ShapeError("conv1d: bias Cout mismatch");
        if (Tlen < k) throw ShapeError("conv1d: input length " + std::to_string(Tlen) +
                                       " shorter than kernel " + std::to_string(k));
        int64_t tout = Tlen - k + 1;
        Tensor<T> out = Tensor<T>::zeros({B, tout, cout});
        const T* x = xv.data.data();
        const T* w = kv.data.data();
        T* y = out.data.data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < tout; ++t) {
                T* yrow = y + (b * tout + t) * cout;
                for (int64_t j = 0; j < cout; ++j) yrow[j] = bv.data[static_cast<size_t>(j)];
                for (int64_t dt = 0; dt < k; ++dt) {
                    const T* xrow = x + (b * Tlen + t + dt) * cin;
                    const T* wrow = w + dt * cin * cout;
                    for (int64_t ci = 0; ci < cin; ++ci) {
                        T xv2 = xrow[ci];
                        const T* wr = wrow + ci * cout;
                        for (int64_t j = 0; j < cout; ++j) yrow[j] += xv2 * wr[j];
                    }
                }
            }
        bool rg = rgrad(input) || rgrad(kernels) || rgrad(bias);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [input, kernels, bias, o, B, Tlen, cin, k, cout, tout](Tape& tp) {
            const T* g = tp.nodes_[o.id].grad.data();
            const T* x = tp.val(input).data.data();
            const T* w = tp.val(kernels).data.data();
            T* gx = tp.rgrad(input) ? tp.nodes_[input.id].grad.data() : nullptr;
            T* gw = tp.rgrad(kernels) ? tp.nodes_[kernels.id].grad.data() : nullptr;
            T* gb = tp.rgrad(bias) ? tp.nodes_[bias.id].grad.data() : nullptr;
            for (int64_t b = 0; b < B; ++b)
                for (int64_t t = 0; t < tout; ++t) {
                    const T* grow = g + (b * tout + t) * cout;
                    if (gb)
                        for (int64_t j = 0; j < cout; ++j) gb[j] += grow[j];
                    for (int64_t dt = 0; dt < k; ++dt) {
                        const T* xrow = x + (b * Tlen + t + dt) * cin;
                        const T* wrow = w + dt * cin * cout;
                        T* gxrow = gx ? gx + (b * Tlen + t + dt) * cin : nullptr;
                        T* gwrow = gw ? gw + dt * cin * cout : nullptr;
                        for (int64_t ci = 0; ci < cin; ++ci) {
                            const T* wr = wrow + ci * cout;
                            if (gxrow) {
                                T s = 0;
                                for (int64_t j = 0; j < cout; ++j) s += grow[j] * wr[j];
                                gxrow[ci] += s;
                            }
                            if (gwrow) {
                                T xv2 = xrow[ci];
                                T* gwr = gwrow + ci * cout;
                                for (int64_t j = 0; j < cout; ++j) gwr[j] += xv2 * grow[j];
                            }
                        }
                    }
                }
        });
        return o;
    }

    // --- LSTM cell --------------------------------------------------------

    // One fused LSTM step. Gate order in the 4H parameter columns is
    // (input, forget, candidate, output); checkpoints rely on this layout.
    // x (B x D), h_prev/c_prev (B x H), wx (D x 4H), wh (H x 4H), b (4H).
    // The combined backward lives on the second output node; both outputs are
    // created back-to-back so every consumer sits later on the tape.
    std::pair<Var<T>, Var<T>> lstm_step(Var<T> x, Var<T> h_prev, Var<T> c_prev, Var<T> wx,
                                        Var<T> wh, Var<T> b) {
        const Tensor<T>& xv = val(x);
        const Tensor<T>& hv = val(h_prev);
        const Tensor<T>& cv = val(c_prev);
        const Tensor<T>& wxv = val(wx);
        const Tensor<T>& whv = val(wh);
        const Tensor<T>& bv = val(b);
        if (xv.rank() != 2) throw ShapeError("lstm_step: x must be rank 2");
        int64_t B = xv.shape[0], D = xv.shape[1];
        if (hv.rank() != 2 || cv.rank() != 2 || hv.shape != cv.shape || hv.shape[0] != B)
            throw ShapeError("lstm_step: h/c shape mismatch");
        int64_t H = hv.shape[1];
        if (wxv.shape != Shape{D, 4 * H} || whv.shape != Shape{H, 4 * H} ||
            bv.shape != Shape{4 * H})
            throw ShapeError("lstm_step: parameter shapes inconsistent with D=" +
                             std::to_string(D) + " H=" + std::to_string(H));

        // gates = x*wx + h_prev*wh + b, columns [i f g o]
        Tensor<T> gates = Tensor<T>::zeros({B, 4 * H});
        detail::gemm_nn_acc(xv.data.data(), wxv.data.data(), gates.data.data(), B, D, 4 * H);
        detail::gemm_nn_acc(hv.data.data(), whv.data.data(), gates.data.data(), B, H, 4 * H);
        for (int64_t r = 0; r < B; ++r)
            for (int64_t j = 0; j < 4 * H; ++j) gates.at(r, j) += bv.data[static_cast<size_t>(j)];

        auto acts = std::make_shared<Tensor<T>>(Tensor<T>::zeros({B, 4 * H}));
        auto tanh_c = std::make_shared<std::vector<T>>(static_cast<size_t>(B * H));
        Tensor<T> h_out = Tensor<T>::zeros({B, H});
        Tensor<T> c_out = Tensor<T>::zeros({B, H});
        for (int64_t r = 0; r < B; ++r) {
            for (int64_t j = 0; j < H; ++j) {
                T gi = T(1) / (T(1) + std::exp(-gates.at(r, j)));
                T gf = T(1) / (T(1) + std::exp(-gates.at(r, H + j)));
                T gg = std::tanh(gates.at(r, 2 * H + j));
                T go = T(1) / (T(1) + std::exp(-gates.at(r, 3 * H + j)));
                acts->at(r, j) = gi;
                acts->at(r, H + j) = gf;
                acts->at(r, 2 * H + j) = gg;
                acts->at(r, 3 * H + j) = go;
                T c = gf * cv.at(r, j) + gi * gg;
                T tc = std::tanh(c);
                c_out.at(r, j) = c;
                (*tanh_c)[static_cast<size_t>(r * H + j)] = tc;
                h_out.at(r, j) = go * tc;
            }
        }

        bool rg = rgrad(x) || rgrad(h_prev) || rgrad(c_prev) || rgrad(wx) || rgrad(wh) || rgrad(b);
        Var<T> h_var = push(std::move(h_out), rg, nullptr);
        Var<T> c_var = push(std::move(c_out), rg, nullptr);
        if (rg) set_backward(c_var, [x, h_prev, c_prev, wx, wh, b, h_var, c_var, acts, tanh_c, B,
                                     D, H](Tape& tp) {
            const T* gh = tp.nodes_[h_var.id].grad.data();
            const T* gc_out = tp.nodes_[c_var.id].grad.data();
            const T* cprev = tp.val(c_prev).data.data();
            Tensor<T> dgates = Tensor<T>::zeros({B, 4 * H});
            std::vector<T> dc_prev_local(static_cast<size_t>(B * H));
            for (int64_t r = 0; r < B; ++r) {
                for (int64_t j = 0; j < H; ++j) {
                    T gi = acts->at(r, j), gf = acts->at(r, H + j);
                    T gg = acts->at(r, 2 * H + j), go = acts->at(r, 3 * H + j);
                    T tc = (*tanh_c)[static_cast<size_t>(r * H + j)];
                    T dh = gh[r * H + j];
                    T dc = gc_out[r * H + j] + dh * go * (T(1) - tc * tc);
                    dgates.at(r, 3 * H + j) = dh * tc * go * (T(1) - go);
                    dgates.at(r, H + j) = dc * cprev[r * H + j] * gf * (T(1) - gf);
                    dgates.at(r, j) = dc * gg * gi * (T(1) - gi);
                    dgates.at(r, 2 * H + j) = dc * gi * (T(1) - gg * gg);
                    dc_prev_local[static_cast<size_t>(r * H + j)] = dc * gf;
                }
            }
            if (tp.rgrad(c_prev)) {
                std::vector<T>& g = tp.nodes_[c_prev.id].grad;
                for (size_t i = 0; i < g.size(); ++i) g[i] += dc_prev_local[i];
            }
            if (tp.rgrad(x))
                detail::gemm_nt_acc(dgates.data.data(), tp.val(wx).data.data(),
                                    tp.nodes_[x.id].grad.data(), B, 4 * H, D);
            if (tp.rgrad(h_prev))
                detail::gemm_nt_acc(dgates.data.data(), tp.val(wh).data.data(),
                                    tp.nodes_[h_prev.id].grad.data(), B, 4 * H, H);
            if (tp.rgrad(wx))
                detail::gemm_tn_acc(tp.val(x).data.data(), dgates.data.data(),
                                    tp.nodes_[wx.id].grad.data(), D, B, 4 * H);
            if (tp.rgrad(wh))
                detail::gemm_tn_acc(tp.val(h_prev).data.data(), dgates.data.data(),
                                    tp.nodes_[wh.id].grad.data(), H, B, 4 * H);
            if (tp.rgrad(b)) {
                std::vector<T>& g = tp.nodes_[b.id].grad;
                for (int64_t r = 0; r < B; ++r)
                    for (int64_t j = 0; j < 4 * H; ++j) g[static_cast<size_t>(j)] += dgates.at(r, j);
            }
        });
        return {h_var, c_var};
    }

    // Extract timestep t from a (B x T x F) sequence as a (B x F) matrix.
    Var<T> slice_time(Var<T> a, int64_t t) {
        const Tensor<T>& av = val(a);
        if (av.rank() != 3) throw ShapeError("slice_time: expects rank-3 input");
        int64_t B = av.shape[0], Tlen = av.shape[1], f = av.shape[2];
        if (t < 0 || t >= Tlen) throw ShapeError("slice_time: index out of range");
        Tensor<T> out = Tensor<T>::zeros({B, f});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t j = 0; j < f; ++j)
                out.data[static_cast<size_t>(b * f + j)] =
                    av.data[static_cast<size_t>((b * Tlen + t) * f + j)];
        bool rg = rgrad(a);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [a, o, t, B, Tlen, f](Tape& tp) {
            const T* g = tp.nodes_[o.id].grad.data();
            std::vector<T>& ga = tp.nodes_[a.id].grad;
            for (int64_t b = 0; b < B; ++b)
                for (int64_t j = 0; j < f; ++j)
                    ga[static_cast<size_t>((b * Tlen + t) * f + j)] += g[b * f + j];
        });
        return o;
    }

    // --- reductions and losses --------------------------------------------

    Var<T> sum_all(Var<T> a) {
        T s = 0;
        for (T x : val(a).data) s += x;
        bool rg = rgrad(a);
        Var<T> o = push(Tensor<T>({1}, {s}), rg, nullptr);
        if (rg) set_backward(o, [a, o](Tape& tp) {
            T g = tp.nodes_[o.id].grad[0];
            std::vector<T>& ga = tp.nodes_[a.id].grad;
            for (T& x : ga) x += g;
        });
        return o;
    }

    Var<T> mean_all(Var<T> a) {
        int64_t n = val(a).numel();
        if (n == 0) throw ShapeError("mean_all: empty tensor");
        return scale(sum_all(a), 1.0 / static_cast<double>(n));
    }

    // Mean over rows of softmax cross-entropy. With mask_diag, logit (r, r) is
    // excluded from the partition function (the NT-Xent k != i indicator).
    // targets[r] must not point at a masked column.
    Var<T> cross_entropy_rows(Var<T> logits, std::vector<int64_t> targets,
                              bool mask_diag = false) {
        const Tensor<T>& lv = val(logits);
        if (lv.rank() != 2) throw ShapeError("cross_entropy_rows: logits must be rank 2");
        int64_t r = lv.shape[0], c = lv.shape[1];
        if (static_cast<int64_t>(targets.size()) != r)
            throw ShapeError("cross_entropy_rows: targets length mismatch");
        for (int64_t i = 0; i < r; ++i) {
            if (targets[static_cast<size_t>(i)] < 0 || targets[static_cast<size_t>(i)] >= c)
                throw ShapeError("cross_entropy_rows: target out of range");
            if (mask_diag && targets[static_cast<size_t>(i)] == i && i < c)
                throw InvalidParams("cross_entropy_rows: target hits masked diagonal");
        }
        auto probs = std::make_shared<Tensor<T>>(Tensor<T>::zeros({r, c}));
        T loss = 0;
        for (int64_t i = 0; i < r; ++i) {
            T mx = -std::numeric_limits<T>::infinity();
            for (int64_t j = 0; j < c; ++j) {
                if (mask_diag && j == i) continue;
                mx = std::max(mx, lv.at(i, j));
            }
            T denom = 0;
            for (int64_t j = 0; j < c; ++j) {
                if (mask_diag && j == i) continue;
                denom += std::exp(lv.at(i, j) - mx);
            }
            T lse = mx + std::log(denom);
            loss += lse - lv.at(i, targets[static_cast<size_t>(i)]);
            for (int64_t j = 0; j < c; ++j) {
                if (mask_diag && j == i) continue;
                probs->at(i, j) = std::exp(lv.at(i, j) - lse);
            }
        }
        loss /= static_cast<T>(r);
        bool rg = rgrad(logits);
        Var<T> o = push(Tensor<T>({1}, {loss}), rg, nullptr);
        if (rg) set_backward(o, [logits, o, probs, targets, r, c, mask_diag](Tape& tp) {
            T g = tp.nodes_[o.id].grad[0] / static_cast<T>(r);
            std::vector<T>& gl = tp.nodes_[logits.id].grad;
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) {
                    if (mask_diag && j == i) continue;
                    T p = probs->at(i, j);
                    T ind = (j == targets[static_cast<size_t>(i)]) ? T(1) : T(0);
                    gl[static_cast<size_t>(i * c + j)] += g * (p - ind);
                }
        });
        return o;
    }

    // --- backward ---------------------------------------------------------

    void backward(Var<T> out) {
        if (backward_done_)
            throw InvalidState("tape already backward-traversed; build a new tape");
        backward_done_ = true;
        Node& n = nodes_[check(out)];
        if (n.value.numel() != 1) throw ShapeError("backward: output must be scalar");
        if (!n.requires_grad)
            throw InvalidState("backward: output does not depend on any grad leaf");
        n.grad[0] = T(1);
        for (size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].backward && nodes_[i].requires_grad) nodes_[i].backward(*this);
        }
    }

    bool backward_done() const { return backward_done_; }

    const Tensor<T>& val(Var<T> v) const { return nodes_[check(v)].value; }
    bool rgrad(Var<T> v) const { return nodes_[check(v)].requires_grad; }

   private:
    Var<T> push(Tensor<T> value, bool requires_grad, std::function<void(Tape&)> bw) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        if (requires_grad) n.grad.assign(n.value.data.size(), T(0));
        n.backward = std::move(bw);
        nodes_.push_back(std::move(n));
        return Var<T>{this, static_cast<int32_t>(nodes_.size() - 1)};
    }

    void set_backward(Var<T> v, std::function<void(Tape&)> bw) {
        nodes_[static_cast<size_t>(v.id)].backward = std::move(bw);
    }

    size_t check(Var<T> v) const {
        if (v.tape != this || v.id < 0 || static_cast<size_t>(v.id) >= nodes_.size())
            throw InvalidState("Var does not belong to this tape");
        return static_cast<size_t>(v.id);
    }

    // add-specific fast path: grads of both inputs get the output grad
    Var<T> binary_elementwise(Tensor<T> out, Var<T> a, Var<T> b, void*) {
        bool rg = rgrad(a) || rgrad(b);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [a, b, o](Tape& tp) {
            const std::vector<T>& g = tp.nodes_[o.id].grad;
            if (tp.rgrad(a)) {
                std::vector<T>& ga = tp.nodes_[a.id].grad;
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (tp.rgrad(b)) {
                std::vector<T>& gb = tp.nodes_[b.id].grad;
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
        return o;
    }

    template <typename Fn>
    Var<T> unary_saved(Tensor<T> out, Var<T> a, Fn dfn) {
        bool rg = rgrad(a);
        Var<T> o = push(std::move(out), rg, nullptr);
        if (rg) set_backward(o, [a, o, dfn](Tape& tp) {
            const std::vector<T>& g = tp.nodes_[o.id].grad;
            const T* y = tp.val(o).data.data();
            std::vector<T>& ga = tp.nodes_[a.id].grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += dfn(y[i], g[i]);
        });
        return o;
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

// Standalone l2 normalization on plain tensors (rank 1 treated as one row).
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& v) {
    Tensor<T> out = v;
    int64_t c = v.rank() == 0 ? 0 : v.shape.back();
    if (c == 0) return out;
    int64_t rows = v.numel() / c;
    for (int64_t i = 0; i < rows; ++i) {
        T s = 0;
        for (int64_t j = 0; j < c; ++j) {
            T x = v.data[static_cast<size_t>(i * c + j)];
            s += x * x;
        }
        T n = std::sqrt(s);
        if (n > T(0))
            for (int64_t j = 0; j < c; ++j) out.data[static_cast<size_t>(i * c + j)] /= n;
    }
    return out;
}

}  // namespace senres
