#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "senres/tape.hpp"

namespace senres {

// Builds a fresh tape from the given inputs and returns the scalar output.
// The builder must be deterministic: every call with the same inputs must
// produce the same graph, or the finite differences below are meaningless.
using GraphBuilder =
    std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradCheckResult {
    double max_rel_err = 0.0;
    int64_t worst_input = -1;
    int64_t worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

inline double grad_rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central-difference check of every element of every input against the
// tape's reverse-mode gradient.
inline GradCheckResult grad_check(const GraphBuilder& build, std::vector<Tensor<double>> inputs,
                                  double h = 1e-5) {
    for (auto& t : inputs) t.requires_grad = true;

    auto eval = [&](const std::vector<Tensor<double>>& pts) {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        vars.reserve(pts.size());
        for (const auto& t : pts) vars.push_back(tape.leaf(t));
        Var<double> out = build(tape, vars);
        if (out.value().numel() != 1) throw ShapeError("grad_check: builder must return a scalar");
        return out.value().data[0];
    };

    // One reverse pass for all analytic gradients.
    Tape<double> tape;
    std::vector<Var<double>> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(tape.leaf(t));
    Var<double> out = build(tape, vars);
    tape.backward(out);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(vars.size());
    for (auto v : vars) analytic.push_back(v.grad());

    GradCheckResult res;
    std::vector<Tensor<double>> pts = inputs;
    for (size_t vi = 0; vi < pts.size(); ++vi) {
        for (size_t ei = 0; ei < pts[vi].data.size(); ++ei) {
            double orig = pts[vi].data[ei];
            pts[vi].data[ei] = orig + h;
            double fp = eval(pts);
            pts[vi].data[ei] = orig - h;
            double fm = eval(pts);
            pts[vi].data[ei] = orig;
            double num = (fp - fm) / (2.0 * h);
            double rel = grad_rel_err(analytic[vi][ei], num);
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_input = static_cast<int64_t>(vi);
                res.worst_index = static_cast<int64_t>(ei);
                res.analytic = analytic[vi][ei];
                res.numeric = num;
            }
        }
    }
    return res;
}

}  // namespace senres
