#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "senres/rng.hpp"
#include "senres/stats.hpp"

using namespace senres;

namespace {

// Independent signed-rank evaluation: own ranking code plus a full sweep of
// all 2^n sign assignments.
struct OracleResult {
    double w_plus, w_minus, statistic, p_value;
    int n_used;
};

OracleResult wilcoxon_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) d.push_back(a[i] - b[i]);
    size_t n = d.size();

    // ranks of |d| with ties averaged, via sorted (value, index) pairs
    std::vector<std::pair<double, size_t>> order;
    for (size_t i = 0; i < n; ++i) order.emplace_back(std::abs(d[i]), i);
    std::sort(order.begin(), order.end());
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && order[j + 1].first == order[i].first) ++j;
        double avg = static_cast<double>(i + j + 2) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k].second] = avg;
        i = j + 1;
    }

    OracleResult res{0.0, 0.0, 0.0, 0.0, static_cast<int>(n)};
    for (size_t k2 = 0; k2 < n; ++k2)
        (d[k2] > 0 ? res.w_plus : res.w_minus) += ranks[k2];
    res.statistic = std::min(res.w_plus, res.w_minus);

    double total = 0.0;
    for (double r : ranks) total += r;
    uint64_t hits = 0;
    for (uint64_t mask = 0; mask < (1ull << n); ++mask) {
        double t = 0.0;
        for (size_t k2 = 0; k2 < n; ++k2)
            if (mask & (1ull << k2)) t += ranks[k2];
        if (std::min(t, total - t) <= res.statistic + 1e-12) ++hits;
    }
    res.p_value = static_cast<double>(hits) / static_cast<double>(1ull << n);
    return res;
}

}  // namespace

// --- macro F1 ---------------------------------------------------------------

TEST_CASE("macro f1 matches hand-computed confusion tables") {
    // class 0: tp 1 fn 1 -> 2/3; class 1: tp 2 fp 1 -> 4/5; class 2: exact -> 1
    std::vector<int> labels = {0, 0, 1, 1, 2};
    std::vector<int> preds = {0, 1, 1, 1, 2};
    REQUIRE(mean_f1(preds, labels, 3) == Catch::Approx(37.0 / 45.0).margin(1e-15));

    // everything predicted as class 0
    std::vector<int> l2 = {0, 1, 2, 0, 1, 2};
    std::vector<int> p2(6, 0);
    REQUIRE(mean_f1(p2, l2, 3) == Catch::Approx(1.0 / 6.0).margin(1e-15));

    REQUIRE(mean_f1(l2, l2, 3) == 1.0);
}

TEST_CASE("macro f1 averages only over classes present in the labels") {
    std::vector<int> labels = {0, 0, 1};
    std::vector<int> preds = {0, 1, 1};
    // classes 2..4 never appear and must not drag the average down
    REQUIRE(mean_f1(preds, labels, 5) == Catch::Approx(2.0 / 3.0).margin(1e-15));
    REQUIRE(mean_f1(preds, labels, 2) == Catch::Approx(2.0 / 3.0).margin(1e-15));

    // a labeled class that is never predicted scores zero but still counts
    std::vector<int> l3 = {0, 1};
    std::vector<int> p3 = {0, 0};
    REQUIRE(mean_f1(p3, l3, 2) == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("macro f1 is invariant to sample order") {
    Rng rng(4);
    std::vector<int> labels, preds;
    for (int i = 0; i < 200; ++i) {
        labels.push_back(static_cast<int>(rng.below(4)));
        preds.push_back(static_cast<int>(rng.below(4)));
    }
    double base = mean_f1(preds, labels, 4);
    std::vector<size_t> idx(labels.size());
    std::iota(idx.begin(), idx.end(), size_t(0));
    rng.shuffle(idx);
    std::vector<int> labels2, preds2;
    for (size_t i : idx) {
        labels2.push_back(labels[i]);
        preds2.push_back(preds[i]);
    }
    REQUIRE(mean_f1(preds2, labels2, 4) == base);
}

TEST_CASE("macro f1 validates its input") {
    REQUIRE_THROWS_AS(mean_f1({0, 1}, {0}, 2), ShapeError);
    REQUIRE_THROWS_AS(mean_f1({0, 2}, {0, 1}, 2), InvalidParams);
    REQUIRE_THROWS_AS(mean_f1({0, -1}, {0, 1}, 2), InvalidParams);
    REQUIRE_THROWS_AS(mean_f1({0}, {0}, 0), InvalidParams);
    REQUIRE_THROWS_AS(mean_f1({}, {}, 3), InvalidParams);  // nothing labeled
}

// --- confidence limits ------------------------------------------------------

TEST_CASE("confidence limits reproduce the five-point textbook example") {
    auto [lo, hi] = confidence_limits_95({1, 2, 3, 4, 5});
    double t975df4 = 2.7764451051977987;
    double half = t975df4 * std::sqrt(2.5) / std::sqrt(5.0);
    REQUIRE(lo == Catch::Approx(3.0 - half).margin(1e-12));
    REQUIRE(hi == Catch::Approx(3.0 + half).margin(1e-12));
    REQUIRE(hi - 3.0 == Catch::Approx(1.963).margin(1e-3));
}

TEST_CASE("confidence limits are symmetric and shift-equivariant") {
    std::vector<double> scores = {0.71, 0.74, 0.69, 0.8, 0.77, 0.73};
    auto [lo, hi] = confidence_limits_95(scores);
    double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / 6.0;
    REQUIRE((lo + hi) / 2.0 == Catch::Approx(mean).margin(1e-12));
    REQUIRE(lo < mean);
    REQUIRE(hi > mean);

    std::vector<double> shifted = scores;
    for (double& x : shifted) x += 0.5;
    auto [lo2, hi2] = confidence_limits_95(shifted);
    REQUIRE(lo2 == Catch::Approx(lo + 0.5).margin(1e-12));
    REQUIRE(hi2 == Catch::Approx(hi + 0.5).margin(1e-12));

    auto [clo, chi] = confidence_limits_95({0.5, 0.5, 0.5});
    REQUIRE(clo == 0.5);
    REQUIRE(chi == 0.5);

    REQUIRE_THROWS_AS(confidence_limits_95({0.5}), InvalidParams);
    REQUIRE_THROWS_AS(confidence_limits_95({}), InvalidParams);
}

// --- signed-rank test -------------------------------------------------------

TEST_CASE("signed-rank p-values match full enumeration on random pairs") {
    Rng rng(11);
    for (size_t n = 5; n <= 12; ++n) {
        for (int rep = 0; rep < 4; ++rep) {
            std::vector<double> a, b;
            for (size_t i = 0; i < n; ++i) {
                a.push_back(rng.uniform(0.0, 1.0));
                b.push_back(rng.uniform(0.0, 1.0));
            }
            WilcoxonReport rep_lib = wilcoxon_signed_rank(a, b);
            OracleResult rep_orc = wilcoxon_oracle(a, b);
            REQUIRE(rep_lib.exact);
            REQUIRE(rep_lib.n_used == rep_orc.n_used);
            REQUIRE(rep_lib.w_plus == Catch::Approx(rep_orc.w_plus).margin(1e-12));
            REQUIRE(rep_lib.w_minus == Catch::Approx(rep_orc.w_minus).margin(1e-12));
            REQUIRE(rep_lib.p_value == Catch::Approx(rep_orc.p_value).margin(1e-12));
        }
    }
}

TEST_CASE("five uniformly better scores give p of one sixteenth times two") {
    std::vector<double> a = {0.9, 0.8, 0.85, 0.95, 0.88};
    std::vector<double> b = {0.5, 0.6, 0.55, 0.52, 0.58};
    WilcoxonReport rep = wilcoxon_signed_rank(a, b);
    REQUIRE(rep.p_value == Catch::Approx(0.0625).margin(1e-15));
    REQUIRE(rep.w_minus == 0.0);
    REQUIRE(rep.w_plus == 15.0);
    REQUIRE(rep.statistic == 0.0);
    REQUIRE(rep.n_used == 5);
    REQUIRE(rep.verdict == "+");  // 0.0625 is not below 0.05
}

TEST_CASE("tied magnitudes share average ranks") {
    // diffs: +0.5 -0.5 +2 +2 +3 -3 -> ranks 1.5 1.5 3.5 3.5 5.5 5.5
    std::vector<double> b(6, 0.0);
    std::vector<double> a = {0.5, -0.5, 2.0, 2.0, 3.0, -3.0};
    WilcoxonReport rep = wilcoxon_signed_rank(a, b);
    REQUIRE(rep.w_plus == Catch::Approx(14.0).margin(1e-12));
    REQUIRE(rep.w_minus == Catch::Approx(7.0).margin(1e-12));
    REQUIRE(rep.statistic == Catch::Approx(7.0).margin(1e-12));
    OracleResult orc = wilcoxon_oracle(a, b);
    REQUIRE(rep.p_value == Catch::Approx(orc.p_value).margin(1e-12));
}

TEST_CASE("zero differences are dropped before ranking") {
    std::vector<double> a = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0};
    std::vector<double> b = {1.0, 2.5, 2.0, 3.0, 4.8, 6.5, 6.0};  // first pair ties
    WilcoxonReport rep = wilcoxon_signed_rank(a, b);
    REQUIRE(rep.n_used == 6);
    OracleResult orc = wilcoxon_oracle(a, b);
    REQUIRE(rep.p_value == Catch::Approx(orc.p_value).margin(1e-12));

    std::vector<double> mostly_equal = {1, 2, 3, 4, 5, 6};
    std::vector<double> barely = {1, 2, 3, 4, 5.5, 6.5};  // only 2 nonzero diffs
    REQUIRE_THROWS_AS(wilcoxon_signed_rank(mostly_equal, barely), InsufficientData);
    REQUIRE_THROWS_AS(wilcoxon_signed_rank({1, 2, 3, 4}, {2, 3, 4, 5}), InsufficientData);
    REQUIRE_THROWS_AS(wilcoxon_signed_rank({1, 2, 3}, {1, 2}), ShapeError);
}

TEST_CASE("verdicts carry direction and significance") {
    std::vector<double> base(10, 0.5);
    std::vector<double> better;
    Rng rng(7);
    for (int i = 0; i < 10; ++i) better.push_back(0.5 + rng.uniform(0.05, 0.2));

    WilcoxonReport up = wilcoxon_signed_rank(better, base);
    REQUIRE(up.p_value == Catch::Approx(2.0 / 1024.0).margin(1e-15));
    REQUIRE(up.verdict == "s+");
    WilcoxonReport down = wilcoxon_signed_rank(base, better);
    REQUIRE(down.verdict == "s-");

    // weak mixed signal: direction without significance
    std::vector<double> x = {0.6, 0.4, 0.7, 0.45, 0.65};
    std::vector<double> y = {0.5, 0.5, 0.5, 0.5, 0.5};
    WilcoxonReport weak = wilcoxon_signed_rank(x, y);
    REQUIRE(weak.p_value > 0.05);
    REQUIRE(weak.verdict == "+");
    WilcoxonReport weakdown = wilcoxon_signed_rank(y, x);
    REQUIRE(weakdown.verdict == "-");
}

TEST_CASE("the normal approximation tracks enumeration just past the cutoff") {
    Rng rng(13);
    std::vector<double> a, b;
    for (int i = 0; i < 21; ++i) {
        a.push_back(rng.uniform(0.0, 1.0));
        b.push_back(rng.uniform(0.0, 1.0) + 0.15);
    }
    WilcoxonReport rep = wilcoxon_signed_rank(a, b);
    REQUIRE_FALSE(rep.exact);
    OracleResult orc = wilcoxon_oracle(a, b);
    REQUIRE(rep.p_value == Catch::Approx(orc.p_value).margin(0.03));
    REQUIRE(rep.p_value <= 1.0);
    REQUIRE(rep.p_value >= 0.0);
}
