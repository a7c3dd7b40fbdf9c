#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "senres/gradcheck.hpp"
#include "senres/optim.hpp"
#include "senres/rng.hpp"
#include "senres/tape.hpp"

using namespace senres;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Keeps values away from the relu/normalize kinks so finite differences stay
// honest.
Tensor<double> random_tensor_off_kink(Shape shape, Rng& rng) {
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.data) {
        double x = rng.uniform(0.2, 1.0);
        v = rng.uniform01() < 0.5 ? -x : x;
    }
    return t;
}

constexpr double kGradTol = 1e-4;

}  // namespace

// --- tensors ----------------------------------------------------------------

TEST_CASE("tensor construction validates data length against shape") {
    REQUIRE_NOTHROW(Tensor<double>({2, 3}, std::vector<double>(6, 0.0)));
    REQUIRE_THROWS_AS(Tensor<double>({2, 3}, std::vector<double>(5, 0.0)), ShapeError);
    REQUIRE(Tensor<double>::zeros({4}).numel() == 4);
    REQUIRE(Tensor<double>::full({2, 2}, 7.0).data == std::vector<double>(4, 7.0));
}

TEST_CASE("tensor cast converts element type and keeps shape") {
    Tensor<double> t({2}, {1.5, -2.25});
    Tensor<float> f = t.cast<float>();
    REQUIRE(f.shape == Shape{2});
    REQUIRE(f.data[0] == 1.5f);
    REQUIRE(f.data[1] == -2.25f);
}

// --- rng --------------------------------------------------------------------

TEST_CASE("rng draws are reproducible per seed") {
    Rng a(42), b(42), c(43);
    std::vector<double> da, db, dc;
    for (int i = 0; i < 100; ++i) {
        da.push_back(a.uniform01());
        db.push_back(b.uniform01());
        dc.push_back(c.uniform01());
    }
    REQUIRE(da == db);
    REQUIRE(da != dc);
}

TEST_CASE("uniform01 stays in the half-open unit interval") {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        double v = rng.uniform01();
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
    }
}

TEST_CASE("below covers its range and rejects zero") {
    Rng rng(5);
    std::set<uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        uint64_t v = rng.below(7);
        REQUIRE(v < 7);
        seen.insert(v);
    }
    REQUIRE(seen.size() == 7);
    REQUIRE_THROWS_AS(rng.below(0), InvalidParams);
}

TEST_CASE("uniform_int is inclusive on both ends") {
    Rng rng(9);
    std::set<int64_t> seen;
    for (int i = 0; i < 500; ++i) {
        int64_t v = rng.uniform_int(-2, 2);
        REQUIRE(v >= -2);
        REQUIRE(v <= 2);
        seen.insert(v);
    }
    REQUIRE(seen.size() == 5);
    REQUIRE(rng.uniform_int(3, 3) == 3);
    REQUIRE_THROWS_AS(rng.uniform_int(4, 3), InvalidParams);
}

TEST_CASE("shuffle permutes and is seed-deterministic") {
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    std::vector<int> w = v;
    Rng a(11), b(11);
    a.shuffle(v);
    b.shuffle(w);
    REQUIRE(v == w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expect(50);
    std::iota(expect.begin(), expect.end(), 0);
    REQUIRE(sorted == expect);
    REQUIRE(v != expect);  // astronomically unlikely to be identity
}

TEST_CASE("stream derivation separates substreams") {
    Rng a = Rng::stream(1, 0);
    Rng b = Rng::stream(1, 1);
    REQUIRE(a.next_u64() != b.next_u64());
    REQUIRE(Rng::mix(1, 2) == Rng::mix(1, 2));
    REQUIRE(Rng::mix(1, 2) != Rng::mix(2, 1));
}

// --- forward values ---------------------------------------------------------

TEST_CASE("elementwise ops compute expected values") {
    Tape<double> t;
    Var<double> a = t.leaf(Tensor<double>({3}, {1.0, -2.0, 3.0}));
    Var<double> b = t.leaf(Tensor<double>({3}, {0.5, 4.0, -1.0}));
    REQUIRE(t.value(t.add(a, b)).data == std::vector<double>{1.5, 2.0, 2.0});
    REQUIRE(t.value(t.sub(a, b)).data == std::vector<double>{0.5, -6.0, 4.0});
    REQUIRE(t.value(t.mul(a, b)).data == std::vector<double>{0.5, -8.0, -3.0});
    REQUIRE(t.value(t.scale(a, 2.5)).data == std::vector<double>{2.5, -5.0, 7.5});
    Var<double> c = t.leaf(Tensor<double>({2}, {0.5, 4.0}));
    REQUIRE_THROWS_AS(t.add(a, c), ShapeError);
}

TEST_CASE("activations match their closed forms") {
    Tape<double> t;
    Var<double> a = t.leaf(Tensor<double>({3}, {-1.0, 0.0, 2.0}));
    auto r = t.value(t.relu(a)).data;
    REQUIRE(r == std::vector<double>{0.0, 0.0, 2.0});
    auto s = t.value(t.sigmoid(a)).data;
    REQUIRE(s[1] == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(s[2] == Catch::Approx(1.0 / (1.0 + std::exp(-2.0))).margin(1e-15));
    auto th = t.value(t.tanh_(a)).data;
    REQUIRE(th[0] == Catch::Approx(std::tanh(-1.0)).margin(1e-15));
    REQUIRE(th[1] == 0.0);
}

TEST_CASE("add_bias broadcasts over leading dimensions") {
    Tape<double> t;
    Var<double> x = t.leaf(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
    Var<double> b = t.leaf(Tensor<double>({3}, {10, 20, 30}));
    REQUIRE(t.value(t.add_bias(x, b)).data == std::vector<double>{11, 22, 33, 14, 25, 36});
    Var<double> bad = t.leaf(Tensor<double>({2}, {1, 2}));
    REQUIRE_THROWS_AS(t.add_bias(x, bad), ShapeError);
}

TEST_CASE("matmul matches a hand-computed product") {
    Tape<double> t;
    Var<double> a = t.leaf(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
    Var<double> b = t.leaf(Tensor<double>({3, 2}, {7, 8, 9, 10, 11, 12}));
    REQUIRE(t.value(t.matmul(a, b)).data == std::vector<double>{58, 64, 139, 154});
    REQUIRE_THROWS_AS(t.matmul(a, a), ShapeError);
}

TEST_CASE("matmul_nt equals matmul against the explicit transpose") {
    Rng rng(3);
    Tensor<double> a = random_tensor({4, 5}, rng);
    Tensor<double> b = random_tensor({3, 5}, rng);
    Tensor<double> bt = Tensor<double>::zeros({5, 3});
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 5; ++j) bt.at(j, i) = b.at(i, j);
    Tape<double> t;
    auto lhs = t.value(t.matmul_nt(t.leaf(a), t.leaf(b))).data;
    Tape<double> t2;
    auto rhs = t2.value(t2.matmul(t2.leaf(a), t2.leaf(bt))).data;
    REQUIRE(lhs == rhs);
}

TEST_CASE("gemm kernels agree with naive triple loops") {
    Rng rng(17);
    int64_t m = 5, k = 7, n = 4;
    Tensor<double> a = random_tensor({m, k}, rng);
    Tensor<double> bt = random_tensor({n, k}, rng);
    Tensor<double> at = random_tensor({k, m}, rng);
    Tensor<double> bn = random_tensor({k, n}, rng);

    std::vector<double> c1(static_cast<size_t>(m * n), 0.0), ref1 = c1;
    senres::detail::gemm_nt_acc(a.data.data(), bt.data.data(), c1.data(), m, k, n);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
            for (int64_t p = 0; p < k; ++p)
                ref1[static_cast<size_t>(i * n + j)] += a.at(i, p) * bt.at(j, p);
    for (size_t i = 0; i < c1.size(); ++i)
        REQUIRE(c1[i] == Catch::Approx(ref1[i]).margin(1e-13));

    std::vector<double> c2(static_cast<size_t>(m * n), 0.0), ref2 = c2;
    senres::detail::gemm_tn_acc(at.data.data(), bn.data.data(), c2.data(), m, k, n);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
            for (int64_t p = 0; p < k; ++p)
                ref2[static_cast<size_t>(i * n + j)] += at.at(p, i) * bn.at(p, j);
    for (size_t i = 0; i < c2.size(); ++i)
        REQUIRE(c2[i] == Catch::Approx(ref2[i]).margin(1e-13));
}

TEST_CASE("concat_cols lays rows out side by side") {
    Tape<double> t;
    Var<double> a = t.leaf(Tensor<double>({2, 2}, {1, 2, 3, 4}));
    Var<double> b = t.leaf(Tensor<double>({2, 1}, {9, 8}));
    REQUIRE(t.value(t.concat_cols(a, b)).data == std::vector<double>{1, 2, 9, 3, 4, 8});
    Var<double> c = t.leaf(Tensor<double>({3, 1}, {0, 0, 0}));
    REQUIRE_THROWS_AS(t.concat_cols(a, c), ShapeError);
}

TEST_CASE("rowwise_dot reduces each row pair to a scalar") {
    Tape<double> t;
    Var<double> a = t.leaf(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
    Var<double> b = t.leaf(Tensor<double>({2, 3}, {1, 0, -1, 2, 2, 2}));
    auto v = t.value(t.rowwise_dot(a, b)).data;
    REQUIRE(v == std::vector<double>{-2.0, 30.0});
}

TEST_CASE("l2_normalize_rows yields unit rows and leaves zero rows alone") {
    Tape<double> t;
    Var<double> a = t.leaf(Tensor<double>({2, 2}, {3, 4, 0, 0}));
    auto v = t.value(t.l2_normalize_rows(a)).data;
    REQUIRE(v[0] == Catch::Approx(0.6).margin(1e-15));
    REQUIRE(v[1] == Catch::Approx(0.8).margin(1e-15));
    REQUIRE(v[2] == 0.0);
    REQUIRE(v[3] == 0.0);
}

TEST_CASE("conv1d computes a valid cross-correlation with bias") {
    Tape<double> t;
    // y_t = 1*x_t + 2*x_{t+1} + 0.5
    Var<double> x = t.leaf(Tensor<double>({1, 4, 1}, {1, 2, 3, 4}));
    Var<double> w = t.leaf(Tensor<double>({2, 1, 1}, {1, 2}));
    Var<double> b = t.leaf(Tensor<double>({1}, {0.5}));
    auto y = t.value(t.conv1d(x, w, b));
    REQUIRE(y.shape == Shape{1, 3, 1});
    REQUIRE(y.data == std::vector<double>{5.5, 8.5, 11.5});
    Var<double> shortx = t.leaf(Tensor<double>({1, 1, 1}, {1}));
    REQUIRE_THROWS_AS(t.conv1d(shortx, w, b), ShapeError);
}

TEST_CASE("slice_time extracts one timestep and checks bounds") {
    Tape<double> t;
    Var<double> x = t.leaf(Tensor<double>({2, 3, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}));
    REQUIRE(t.value(t.slice_time(x, 1)).data == std::vector<double>{2, 3, 8, 9});
    REQUIRE_THROWS_AS(t.slice_time(x, 3), ShapeError);
    REQUIRE_THROWS_AS(t.slice_time(x, -1), ShapeError);
}

TEST_CASE("sum_all and mean_all reduce every element") {
    Tape<double> t;
    Var<double> a = t.leaf(Tensor<double>({2, 2}, {1, 2, 3, 4}));
    REQUIRE(t.value(t.sum_all(a)).data[0] == 10.0);
    REQUIRE(t.value(t.mean_all(a)).data[0] == 2.5);
}

TEST_CASE("cross_entropy_rows of uniform logits is log of the class count") {
    Tape<double> t;
    Var<double> logits = t.leaf(Tensor<double>::zeros({3, 5}));
    double loss = t.value(t.cross_entropy_rows(logits, {0, 2, 4}, false)).data[0];
    REQUIRE(loss == Catch::Approx(std::log(5.0)).margin(1e-12));
}

TEST_CASE("cross_entropy_rows is invariant to per-row logit shifts") {
    Rng rng(21);
    Tensor<double> l = random_tensor({4, 6}, rng);
    Tensor<double> shifted = l;
    for (int64_t i = 0; i < 4; ++i) {
        double s = rng.uniform(-50.0, 50.0);
        for (int64_t j = 0; j < 6; ++j) shifted.at(i, j) += s;
    }
    std::vector<int64_t> targets = {1, 0, 5, 3};
    Tape<double> t1, t2;
    double a = t1.value(t1.cross_entropy_rows(t1.leaf(l), targets, false)).data[0];
    double b = t2.value(t2.cross_entropy_rows(t2.leaf(shifted), targets, false)).data[0];
    REQUIRE(a == Catch::Approx(b).margin(1e-10));
}

TEST_CASE("masked diagonal drops own-row logits from the partition") {
    // with 2 columns and the diagonal masked each row has one valid column,
    // so the target probability is 1 and the loss vanishes
    Tape<double> t;
    Var<double> logits = t.leaf(Tensor<double>({2, 2}, {5.0, -1.0, 2.0, 7.0}));
    double loss = t.value(t.cross_entropy_rows(logits, {1, 0}, true)).data[0];
    REQUIRE(loss == Catch::Approx(0.0).margin(1e-12));
    REQUIRE_THROWS_AS(t.cross_entropy_rows(logits, {0, 1}, true), InvalidParams);
    REQUIRE_THROWS_AS(t.cross_entropy_rows(logits, {0, 2}, false), ShapeError);
    REQUIRE_THROWS_AS(t.cross_entropy_rows(logits, {0}, false), ShapeError);
}

// --- backward discipline ----------------------------------------------------

TEST_CASE("backward runs exactly once per tape") {
    Tape<double> t;
    Tensor<double> a({2}, {1.0, 2.0});
    a.requires_grad = true;
    Var<double> v = t.leaf(a);
    Var<double> s = t.sum_all(v);
    t.backward(s);
    REQUIRE(t.grad(v) == std::vector<double>{1.0, 1.0});
    REQUIRE_THROWS_AS(t.backward(s), InvalidState);
}

TEST_CASE("backward rejects non-scalar outputs and constant-only graphs") {
    Tape<double> t;
    Tensor<double> a({2}, {1.0, 2.0});
    a.requires_grad = true;
    Var<double> v = t.leaf(a);
    REQUIRE_THROWS_AS(t.backward(v), ShapeError);
    Tape<double> t2;
    Var<double> c = t2.constant(Tensor<double>({1}, {3.0}));
    REQUIRE_THROWS_AS(t2.backward(c), InvalidState);
}

TEST_CASE("grad access requires a grad-tracked node") {
    Tape<double> t;
    Var<double> c = t.constant(Tensor<double>({1}, {3.0}));
    REQUIRE_THROWS_AS(t.grad(c), InvalidState);
    Tape<double> other;
    Tensor<double> a({1}, {1.0});
    a.requires_grad = true;
    Var<double> v = other.leaf(a);
    REQUIRE_THROWS_AS(t.value(v), InvalidState);
}

TEST_CASE("constants block gradient flow") {
    Tape<double> t;
    Tensor<double> a({2}, {1.0, 2.0});
    a.requires_grad = true;
    Var<double> va = t.leaf(a);
    Var<double> vc = t.constant(Tensor<double>({2}, {3.0, 4.0}));
    Var<double> s = t.sum_all(t.mul(va, vc));
    t.backward(s);
    REQUIRE(t.grad(va) == std::vector<double>{3.0, 4.0});
    REQUIRE_FALSE(t.rgrad(vc));
}

// --- gradient checks --------------------------------------------------------

TEST_CASE("elementwise and reduction primitives pass finite-difference checks") {
    Rng rng(101);
    for (int inst = 0; inst < 5; ++inst) {
        Tensor<double> a = random_tensor({3, 4}, rng);
        Tensor<double> b = random_tensor({3, 4}, rng);
        auto check = [&](const GraphBuilder& build, std::vector<Tensor<double>> ins) {
            auto res = grad_check(build, std::move(ins));
            CAPTURE(inst, res.worst_input, res.worst_index, res.analytic, res.numeric);
            REQUIRE(res.max_rel_err < kGradTol);
        };
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.add(v[0], v[1]));
        }, {a, b});
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.sub(v[0], v[1]));
        }, {a, b});
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.mul(v[0], v[1]));
        }, {a, b});
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.mean_all(t.scale(v[0], -1.7));
        }, {a});
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.sigmoid(v[0]));
        }, {a});
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.tanh_(v[0]));
        }, {a});
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.relu(v[0]));
        }, {random_tensor_off_kink({3, 4}, rng)});
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.add_bias(v[0], v[1]));
        }, {a, random_tensor({4}, rng)});
    }
}

TEST_CASE("matrix primitives pass finite-difference checks") {
    Rng rng(202);
    for (int inst = 0; inst < 5; ++inst) {
        auto check = [&](const GraphBuilder& build, std::vector<Tensor<double>> ins) {
            auto res = grad_check(build, std::move(ins));
            CAPTURE(inst, res.worst_input, res.worst_index);
            REQUIRE(res.max_rel_err < kGradTol);
        };
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.matmul(v[0], v[1]));
        }, {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.tanh_(t.matmul_nt(v[0], v[1])));
        }, {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng)});
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.concat_cols(v[0], v[1]));
        }, {random_tensor({3, 2}, rng), random_tensor({3, 3}, rng)});
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.sigmoid(t.rowwise_dot(v[0], v[1])));
        }, {random_tensor({4, 3}, rng), random_tensor({4, 3}, rng)});
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.l2_normalize_rows(v[0]));
        }, {random_tensor_off_kink({3, 4}, rng)});
        check([](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.slice_time(v[0], 1));
        }, {random_tensor({2, 4, 3}, rng)});
    }
}

TEST_CASE("conv1d passes finite-difference checks in all three inputs") {
    Rng rng(303);
    for (int inst = 0; inst < 5; ++inst) {
        auto res = grad_check(
            [](Tape<double>& t, const std::vector<Var<double>>& v) {
                return t.sum_all(t.tanh_(t.conv1d(v[0], v[1], v[2])));
            },
            {random_tensor({2, 7, 3}, rng), random_tensor({3, 3, 2}, rng),
             random_tensor({2}, rng)});
        CAPTURE(inst, res.worst_input, res.worst_index);
        REQUIRE(res.max_rel_err < kGradTol);
    }
}

TEST_CASE("lstm_step passes finite-difference checks in all six inputs") {
    Rng rng(404);
    int64_t B = 3, D = 4, H = 2;
    for (int inst = 0; inst < 5; ++inst) {
        auto res = grad_check(
            [](Tape<double>& t, const std::vector<Var<double>>& v) {
                auto [h, c] = t.lstm_step(v[0], v[1], v[2], v[3], v[4], v[5]);
                return t.sum_all(t.add(h, c));
            },
            {random_tensor({B, D}, rng), random_tensor({B, H}, rng),
             random_tensor({B, H}, rng), random_tensor({D, 4 * H}, rng),
             random_tensor({H, 4 * H}, rng), random_tensor({4 * H}, rng)});
        CAPTURE(inst, res.worst_input, res.worst_index);
        REQUIRE(res.max_rel_err < kGradTol);
    }
}

TEST_CASE("unrolled lstm chain backpropagates through time") {
    Rng rng(505);
    int64_t B = 2, D = 3, H = 2, steps = 4;
    auto res = grad_check(
        [steps, B, H](Tape<double>& t, const std::vector<Var<double>>& v) {
            Var<double> hs = t.constant(Tensor<double>::zeros({B, H}));
            Var<double> cs = t.constant(Tensor<double>::zeros({B, H}));
            for (int64_t s = 0; s < steps; ++s) {
                auto [hn, cn] = t.lstm_step(t.slice_time(v[0], s), hs, cs, v[1], v[2], v[3]);
                hs = hn;
                cs = cn;
            }
            return t.sum_all(hs);
        },
        {random_tensor({B, steps, D}, rng), random_tensor({D, 4 * H}, rng),
         random_tensor({H, 4 * H}, rng), random_tensor({4 * H}, rng)});
    REQUIRE(res.max_rel_err < kGradTol);
}

TEST_CASE("cross_entropy_rows passes finite-difference checks") {
    Rng rng(606);
    for (int inst = 0; inst < 5; ++inst) {
        Tensor<double> logits = random_tensor({4, 5}, rng);
        auto res = grad_check(
            [](Tape<double>& t, const std::vector<Var<double>>& v) {
                return t.cross_entropy_rows(v[0], {1, 0, 4, 2}, false);
            },
            {logits});
        REQUIRE(res.max_rel_err < kGradTol);
        auto res_masked = grad_check(
            [](Tape<double>& t, const std::vector<Var<double>>& v) {
                return t.cross_entropy_rows(v[0], {1, 0, 3, 2}, true);
            },
            {logits});
        REQUIRE(res_masked.max_rel_err < kGradTol);
    }
}

// --- gate layout ------------------------------------------------------------

TEST_CASE("lstm gate columns are input, forget, candidate, output in that order") {
    // zero inputs, zero recurrents, zero weights: gates reduce to the bias,
    // c = sigmoid(b_i) * tanh(b_g) + sigmoid(b_f) * c_prev, h = sigmoid(b_o) * tanh(c)
    int64_t H = 2;
    Tensor<double> b = Tensor<double>::zeros({4 * H});
    double bi = 0.3, bf = -0.4, bg = 0.7, bo = 1.1;
    for (int64_t j = 0; j < H; ++j) {
        b.data[static_cast<size_t>(j)] = bi;
        b.data[static_cast<size_t>(H + j)] = bf;
        b.data[static_cast<size_t>(2 * H + j)] = bg;
        b.data[static_cast<size_t>(3 * H + j)] = bo;
    }
    double c_prev = 0.25;
    Tape<double> t;
    Var<double> x = t.leaf(Tensor<double>::zeros({1, 3}));
    Var<double> h0 = t.leaf(Tensor<double>::zeros({1, H}));
    Var<double> c0 = t.leaf(Tensor<double>::full({1, H}, c_prev));
    Var<double> wx = t.leaf(Tensor<double>::zeros({3, 4 * H}));
    Var<double> wh = t.leaf(Tensor<double>::zeros({H, 4 * H}));
    Var<double> bv = t.leaf(b);
    auto [h, c] = t.lstm_step(x, h0, c0, wx, wh, bv);

    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    double expect_c = sig(bf) * c_prev + sig(bi) * std::tanh(bg);
    double expect_h = sig(bo) * std::tanh(expect_c);
    for (int64_t j = 0; j < H; ++j) {
        REQUIRE(t.value(c).data[static_cast<size_t>(j)] ==
                Catch::Approx(expect_c).margin(1e-14));
        REQUIRE(t.value(h).data[static_cast<size_t>(j)] ==
                Catch::Approx(expect_h).margin(1e-14));
    }
}

TEST_CASE("lstm_step validates parameter shapes") {
    Tape<double> t;
    Var<double> x = t.leaf(Tensor<double>::zeros({1, 3}));
    Var<double> h0 = t.leaf(Tensor<double>::zeros({1, 2}));
    Var<double> c0 = t.leaf(Tensor<double>::zeros({1, 2}));
    Var<double> wx_bad = t.leaf(Tensor<double>::zeros({3, 7}));
    Var<double> wh = t.leaf(Tensor<double>::zeros({2, 8}));
    Var<double> b = t.leaf(Tensor<double>::zeros({8}));
    REQUIRE_THROWS_AS(t.lstm_step(x, h0, c0, wx_bad, wh, b), ShapeError);
}

// --- dropout ----------------------------------------------------------------

TEST_CASE("dropout scales survivors and zeroes the rest") {
    Rng rng(1);
    Tape<double> t;
    Tensor<double> x = Tensor<double>::full({1000}, 1.0);
    x.requires_grad = true;
    Var<double> v = t.leaf(x);
    double rate = 0.3;
    Var<double> y = t.dropout(v, rate, rng);
    // copied out: node creation below (sum_all) invalidates value() references
    std::vector<double> yv = t.value(y).data;
    int64_t kept = 0;
    for (double e : yv) {
        bool zero = e == 0.0;
        bool scaled = std::abs(e - 1.0 / 0.7) < 1e-12;
        REQUIRE((zero || scaled));
        if (!zero) ++kept;
    }
    REQUIRE(kept > 600);
    REQUIRE(kept < 800);
    // backward reuses the same mask
    t.backward(t.sum_all(y));
    const auto& g = t.grad(v);
    for (size_t i = 0; i < g.size(); ++i) {
        double expect = yv[i] == 0.0 ? 0.0 : 1.0 / 0.7;
        REQUIRE(g[i] == Catch::Approx(expect).margin(1e-12));
    }
}

TEST_CASE("dropout validates its rate") {
    Rng rng(1);
    Tape<double> t;
    Var<double> v = t.leaf(Tensor<double>::zeros({2}));
    REQUIRE_THROWS_AS(t.dropout(v, 1.0, rng), InvalidParams);
    REQUIRE_THROWS_AS(t.dropout(v, -0.1, rng), InvalidParams);
    REQUIRE_NOTHROW(t.dropout(v, 0.0, rng));
}

// --- optimizer --------------------------------------------------------------

TEST_CASE("adam first step matches the closed form") {
    // after one step: m-hat = g, v-hat = g^2, so
    // delta = -lr * g / (|g| + eps)
    ParamMap<double> p;
    p.emplace("w", Tensor<double>({3}, {1.0, -2.0, 0.5}));
    std::map<std::string, std::vector<double>> g;
    g["w"] = {0.3, -0.7, 2.0};
    AdamState<double> st;
    st.cfg.lr = 0.01;
    adam_step(p, g, st);
    for (size_t i = 0; i < 3; ++i) {
        double gi = g["w"][i];
        double expect = (i == 0 ? 1.0 : i == 1 ? -2.0 : 0.5) -
                        0.01 * gi / (std::abs(gi) + 1e-8);
        REQUIRE(p.at("w").data[i] == Catch::Approx(expect).margin(1e-12));
    }
    REQUIRE(st.step == 1);
}

TEST_CASE("adam second step matches a hand-tracked trajectory") {
    AdamConfig<double> cfg;
    cfg.lr = 0.1;
    ParamMap<double> p;
    p.emplace("w", Tensor<double>({1}, {0.0}));
    AdamState<double> st;
    st.cfg = cfg;
    double g1 = 1.0, g2 = -0.5;
    std::map<std::string, std::vector<double>> g;
    g["w"] = {g1};
    adam_step(p, g, st);
    g["w"] = {g2};
    adam_step(p, g, st);

    double m = 0.0, v = 0.0, w = 0.0;
    for (double gi : {g1, g2}) {
        static int step = 0;
        ++step;
        m = cfg.beta1 * m + (1 - cfg.beta1) * gi;
        v = cfg.beta2 * v + (1 - cfg.beta2) * gi * gi;
        double mh = m / (1 - std::pow(cfg.beta1, step));
        double vh = v / (1 - std::pow(cfg.beta2, step));
        w -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
    REQUIRE(p.at("w").data[0] == Catch::Approx(w).margin(1e-14));
}

TEST_CASE("adam skips absent gradients and rejects size mismatches") {
    ParamMap<double> p;
    p.emplace("a", Tensor<double>({2}, {1.0, 1.0}));
    p.emplace("b", Tensor<double>({2}, {5.0, 5.0}));
    std::map<std::string, std::vector<double>> g;
    g["a"] = {1.0, 1.0};
    AdamState<double> st;
    adam_step(p, g, st);
    REQUIRE(p.at("b").data == std::vector<double>{5.0, 5.0});
    REQUIRE(p.at("a").data[0] < 1.0);
    g["a"] = {1.0};
    REQUIRE_THROWS_AS(adam_step(p, g, st), ShapeError);
}

// --- standalone l2 ----------------------------------------------------------

TEST_CASE("plain-tensor l2 normalization matches the tape op") {
    Rng rng(777);
    Tensor<double> t = random_tensor({4, 6}, rng);
    Tensor<double> plain = l2_normalize(t);
    Tape<double> tape;
    auto taped = tape.value(tape.l2_normalize_rows(tape.leaf(t))).data;
    REQUIRE(plain.data == taped);
    for (int64_t i = 0; i < 4; ++i) {
        double n = 0;
        for (int64_t j = 0; j < 6; ++j) n += plain.at(i, j) * plain.at(i, j);
        REQUIRE(std::sqrt(n) == Catch::Approx(1.0).margin(1e-12));
    }
}
