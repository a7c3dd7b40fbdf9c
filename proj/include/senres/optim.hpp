#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "senres/tensor.hpp"

namespace senres {

template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

template <typename T>
struct AdamConfig {
    T lr = static_cast<T>(1e-3);
    T beta1 = static_cast<T>(0.9);
    T beta2 = static_cast<T>(0.999);
    T eps = static_cast<T>(1e-8);
};

// First/second moment accumulators keyed by parameter name, plus the shared
// step counter used for bias correction. Accumulators are created lazily on
// first sight of a parameter and validated against its shape ever after.
template <typename T>
struct AdamState {
    AdamConfig<T> cfg;
    int64_t step = 0;
    std::map<std::string, std::vector<T>> m;
    std::map<std::string, std::vector<T>> v;
};

template <typename T>
void adam_step(ParamMap<T>& params, const std::map<std::string, std::vector<T>>& grads,
               AdamState<T>& st) {
    st.step += 1;
    T b1t = std::pow(st.cfg.beta1, static_cast<T>(st.step));
    T b2t = std::pow(st.cfg.beta2, static_cast<T>(st.step));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;  // frozen or unused this step
        const std::vector<T>& g = git->second;
        if (g.size() != p.data.size())
            throw ShapeError("adam_step: gradient size " + std::to_string(g.size()) +
                             " does not match parameter '" + name + "' of size " +
                             std::to_string(p.data.size()));
        std::vector<T>& m = st.m[name];
        std::vector<T>& v = st.v[name];
        if (m.empty()) m.assign(p.data.size(), T(0));
        if (v.empty()) v.assign(p.data.size(), T(0));
        if (m.size() != p.data.size() || v.size() != p.data.size())
            throw ShapeError("adam_step: accumulator shape drifted for parameter '" + name + "'");
        for (size_t i = 0; i < p.data.size(); ++i) {
            m[i] = st.cfg.beta1 * m[i] + (T(1) - st.cfg.beta1) * g[i];
            v[i] = st.cfg.beta2 * v[i] + (T(1) - st.cfg.beta2) * g[i] * g[i];
            T mhat = m[i] / (T(1) - b1t);
            T vhat = v[i] / (T(1) - b2t);
            p.data[i] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
        }
    }
}

}  // namespace senres
