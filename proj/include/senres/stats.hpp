#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "senres/common.hpp"

namespace senres {

// Unweighted mean of per-class F1 over the classes present in the reference
// labels. A class with an empty F1 denominator scores 0; classes absent from
// the labels are excluded from the average.
inline double mean_f1(const std::vector<int>& preds, const std::vector<int>& labels,
                      int num_classes) {
    if (preds.size() != labels.size())
        throw ShapeError("mean_f1: prediction/label length mismatch");
    if (num_classes < 1) throw InvalidParams("mean_f1: need at least one class");
    std::vector<int64_t> tp(static_cast<size_t>(num_classes), 0);
    std::vector<int64_t> fp(static_cast<size_t>(num_classes), 0);
    std::vector<int64_t> fn(static_cast<size_t>(num_classes), 0);
    for (size_t i = 0; i < preds.size(); ++i) {
        int p = preds[i], l = labels[i];
        if (p < 0 || p >= num_classes || l < 0 || l >= num_classes)
            throw InvalidParams("mean_f1: class id out of range");
        if (p == l)
            tp[static_cast<size_t>(p)]++;
        else {
            fp[static_cast<size_t>(p)]++;
            fn[static_cast<size_t>(l)]++;
        }
    }
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < num_classes; ++c) {
        size_t ci = static_cast<size_t>(c);
        bool in_labels = tp[ci] + fn[ci] > 0;
        if (!in_labels) continue;
        ++present;
        int64_t denom = 2 * tp[ci] + fp[ci] + fn[ci];
        if (denom > 0) sum += 2.0 * static_cast<double>(tp[ci]) / static_cast<double>(denom);
    }
    if (present == 0) throw InvalidParams("mean_f1: no labeled classes");
    return sum / static_cast<double>(present);
}

// mean +/- t(0.975, n-1) * s / sqrt(n), s the sample standard deviation.
inline std::pair<double, double> confidence_limits_95(const std::vector<double>& scores) {
    size_t n = scores.size();
    if (n < 2) throw InvalidParams("confidence_limits_95: need at least 2 scores");
    double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : scores) ss += (x - mean) * (x - mean);
    double s = std::sqrt(ss / static_cast<double>(n - 1));
    boost::math::students_t_distribution<double> dist(static_cast<double>(n - 1));
    double t = boost::math::quantile(dist, 0.975);
    double half = t * s / std::sqrt(static_cast<double>(n));
    return {mean - half, mean + half};
}

struct WilcoxonReport {
    double w_plus = 0.0;
    double w_minus = 0.0;
    double statistic = 0.0;  // min(w_plus, w_minus)
    double p_value = 1.0;
    int n_used = 0;          // pairs remaining after zero differences drop
    bool exact = true;
    std::string verdict;     // "+", "-", "s+", "s-"
};

namespace detail {

// Average ranks of |d|, ties shared.
inline std::vector<double> average_ranks(const std::vector<double>& absd) {
    size_t n = absd.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t(0));
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return absd[a] < absd[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && absd[idx[j + 1]] == absd[idx[i]]) ++j;
        double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

// Paired two-sided signed-rank test. Zero differences are dropped, tied
// magnitudes share average ranks, the statistic is min(W+, W-). For n <= 20
// the p-value is exact over all 2^n sign assignments; beyond that, a normal
// approximation with continuity and tie corrections. The verdict carries the
// sign of the mean difference, prefixed with "s" when p < alpha.
inline WilcoxonReport wilcoxon_signed_rank(const std::vector<double>& a,
                                           const std::vector<double>& b, double alpha = 0.05) {
    if (a.size() != b.size()) throw ShapeError("wilcoxon: paired samples differ in length");
    if (a.size() < 5)
        throw InsufficientData("wilcoxon: need at least 5 pairs, got " +
                               std::to_string(a.size()));
    std::vector<double> d;
    double mean_diff = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double di = a[i] - b[i];
        mean_diff += di;
        if (di != 0.0) d.push_back(di);
    }
    mean_diff /= static_cast<double>(a.size());
    if (d.size() < 5)
        throw InsufficientData("wilcoxon: fewer than 5 nonzero differences remain");

    size_t n = d.size();
    std::vector<double> absd(n);
    for (size_t i = 0; i < n; ++i) absd[i] = std::abs(d[i]);
    std::vector<double> ranks = detail::average_ranks(absd);

    WilcoxonReport rep;
    rep.n_used = static_cast<int>(n);
    for (size_t i = 0; i < n; ++i)
        (d[i] > 0 ? rep.w_plus : rep.w_minus) += ranks[i];
    rep.statistic = std::min(rep.w_plus, rep.w_minus);

    if (n <= 20) {
        double total = rep.w_plus + rep.w_minus;
        uint64_t count = 0;
        uint64_t assignments = 1ull << n;
        for (uint64_t mask = 0; mask < assignments; ++mask) {
            double t = 0.0;
            for (size_t i = 0; i < n; ++i)
                if (mask & (1ull << i)) t += ranks[i];
            double m = std::min(t, total - t);
            if (m <= rep.statistic + 1e-12) ++count;
        }
        rep.p_value = static_cast<double>(count) / static_cast<double>(assignments);
        rep.exact = true;
    } else {
        double nn = static_cast<double>(n);
        double mu = nn * (nn + 1.0) / 4.0;
        double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
        // tie correction: subtract sum(t^3 - t)/48 over tie groups
        std::vector<double> sorted = absd;
        std::sort(sorted.begin(), sorted.end());
        size_t i = 0;
        while (i < sorted.size()) {
            size_t j = i;
            while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
            double t = static_cast<double>(j - i + 1);
            if (t > 1) var -= (t * t * t - t) / 48.0;
            i = j + 1;
        }
        double z = (rep.statistic - mu + 0.5) / std::sqrt(var);
        rep.p_value = std::min(1.0, std::erfc(-z / std::sqrt(2.0)));
        rep.exact = false;
    }

    rep.verdict = std::string(rep.p_value < alpha ? "s" : "") + (mean_diff >= 0 ? "+" : "-");
    return rep;
}

}  // namespace senres
