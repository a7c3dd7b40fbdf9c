#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "senres/common.hpp"
#include "senres/resample.hpp"
#include "senres/rng.hpp"
#include "senres/window.hpp"

namespace senres {

// --- catalog ---------------------------------------------------------------

inline Window noise(const Window& w, Rng& rng, double amplitude = 0.1) {
    Window out = w;
    for (double& v : out.data) v += rng.uniform(-amplitude, amplitude);
    return out;
}

// Rotate every 3-channel triad of every timestep by the same rotation matrix
// (Rodrigues form). A physically rotated device rotates accelerometer and
// gyroscope frames together, so one matrix serves all triads.
inline Window rotate_axis_angle(const Window& w, const std::array<double, 3>& axis,
                                double angle) {
    if (w.channels % 3 != 0)
        throw InvalidParams("rotate: channel count " + std::to_string(w.channels) +
                            " is not a multiple of 3");
    double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    if (n == 0.0) throw InvalidParams("rotate: zero axis");
    double ux = axis[0] / n, uy = axis[1] / n, uz = axis[2] / n;
    double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    double R[3][3] = {{c + ux * ux * t, ux * uy * t - uz * s, ux * uz * t + uy * s},
                      {uy * ux * t + uz * s, c + uy * uy * t, uy * uz * t - ux * s},
                      {uz * ux * t - uy * s, uz * uy * t + ux * s, c + uz * uz * t}};
    Window out = w;
    for (int64_t ts = 0; ts < w.timesteps; ++ts)
        for (int64_t g = 0; g + 2 < w.channels; g += 3) {
            double x = w.at(ts, g), y = w.at(ts, g + 1), z = w.at(ts, g + 2);
            out.at(ts, g) = R[0][0] * x + R[0][1] * y + R[0][2] * z;
            out.at(ts, g + 1) = R[1][0] * x + R[1][1] * y + R[1][2] * z;
            out.at(ts, g + 2) = R[2][0] * x + R[2][1] * y + R[2][2] * z;
        }
    return out;
}

// Axis uniform on the unit sphere, angle uniform on [0, 2pi).
inline Window rotate(const Window& w, Rng& rng) {
    if (w.channels % 3 != 0)
        throw InvalidParams("rotate: channel count " + std::to_string(w.channels) +
                            " is not a multiple of 3");
    double z = rng.uniform(-1.0, 1.0);
    double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    std::array<double, 3> axis = {r * std::cos(phi), r * std::sin(phi), z};
    double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return rotate_axis_angle(w, axis, angle);
}

// Each channel multiplied by its own scalar drawn from [lo, hi].
inline Window scale(const Window& w, Rng& rng, double lo = 0.7, double hi = 0.9) {
    if (!(lo <= hi)) throw InvalidParams("scale: need lo <= hi");
    Window out = w;
    for (int64_t c = 0; c < w.channels; ++c) {
        double k = rng.uniform(lo, hi);
        for (int64_t t = 0; t < w.timesteps; ++t) out.at(t, c) = w.at(t, c) * k;
    }
    return out;
}

inline Window magnify(const Window& w, Rng& rng, double lo = 1.1, double hi = 1.3) {
    return scale(w, rng, lo, hi);
}

inline Window invert(const Window& w) {
    Window out = w;
    for (double& v : out.data) v = -v;
    return out;
}

inline Window reverse(const Window& w) {
    Window out = w;
    for (int64_t t = 0; t < w.timesteps; ++t)
        for (int64_t c = 0; c < w.channels; ++c) out.at(t, c) = w.at(w.timesteps - 1 - t, c);
    return out;
}

// --- composable specification ----------------------------------------------

enum class AugKind {
    identity,
    noise,
    rotate,
    scale,
    magnify,
    invert,
    reverse,
    resample,
    compose
};

inline std::string to_string(AugKind k) {
    switch (k) {
        case AugKind::identity: return "identity";
        case AugKind::noise: return "noise";
        case AugKind::rotate: return "rotate";
        case AugKind::scale: return "scale";
        case AugKind::magnify: return "magnify";
        case AugKind::invert: return "invert";
        case AugKind::reverse: return "reverse";
        case AugKind::resample: return "resample";
        case AugKind::compose: return "compose";
    }
    return "?";
}

inline AugKind aug_kind_from_string(const std::string& s) {
    if (s == "identity") return AugKind::identity;
    if (s == "noise") return AugKind::noise;
    if (s == "rotate") return AugKind::rotate;
    if (s == "scale") return AugKind::scale;
    if (s == "magnify") return AugKind::magnify;
    if (s == "invert") return AugKind::invert;
    if (s == "reverse") return AugKind::reverse;
    if (s == "resample") return AugKind::resample;
    if (s == "compose") return AugKind::compose;
    throw ConfigError("unknown augmentation kind '" + s + "'");
}

inline constexpr int kMaxComposeDepth = 4;

struct AugmentSpec {
    AugKind kind = AugKind::identity;
    double noise_amplitude = 0.1;
    double range_lo = 0.7;  // scale/magnify multiplier range
    double range_hi = 0.9;
    ResampleParams resample;
    std::vector<AugmentSpec> children;  // compose only, applied left to right

    static AugmentSpec make(AugKind k) {
        AugmentSpec s;
        s.kind = k;
        if (k == AugKind::magnify) {
            s.range_lo = 1.1;
            s.range_hi = 1.3;
        }
        return s;
    }

    void validate(int depth = 1) const {
        if (depth > kMaxComposeDepth)
            throw InvalidParams("AugmentSpec: compose nesting deeper than " +
                                std::to_string(kMaxComposeDepth));
        if (kind == AugKind::compose) {
            if (children.size() < 2)
                throw InvalidParams("AugmentSpec: compose needs at least 2 children");
            for (const auto& c : children) c.validate(depth + 1);
        } else if (!children.empty()) {
            throw InvalidParams("AugmentSpec: only compose may have children");
        }
        if (kind == AugKind::resample) resample.validate();
        if ((kind == AugKind::scale || kind == AugKind::magnify) && !(range_lo <= range_hi))
            throw InvalidParams("AugmentSpec: multiplier range inverted");
        if (kind == AugKind::noise && noise_amplitude < 0)
            throw InvalidParams("AugmentSpec: negative noise amplitude");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = to_string(kind);
        switch (kind) {
            case AugKind::noise: j["amplitude"] = noise_amplitude; break;
            case AugKind::scale:
            case AugKind::magnify:
                j["lo"] = range_lo;
                j["hi"] = range_hi;
                break;
            case AugKind::resample:
                j["M"] = resample.M;
                j["N"] = resample.N;
                j["interpolation"] = to_string(resample.interpolation);
                j["mode"] = to_string(resample.mode);
                j["draw_policy"] = to_string(resample.draw_policy);
                break;
            case AugKind::compose: {
                nlohmann::json arr = nlohmann::json::array();
                for (const auto& c : children) arr.push_back(c.to_json());
                j["children"] = std::move(arr);
                break;
            }
            default: break;
        }
        return j;
    }

    static AugmentSpec from_json(const nlohmann::json& j) {
        if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
            throw ConfigError("AugmentSpec: expected object with string 'kind'");
        for (const auto& [key, val] : j.items()) {
            (void)val;
            if (key != "kind" && key != "amplitude" && key != "lo" && key != "hi" &&
                key != "M" && key != "N" && key != "interpolation" && key != "mode" &&
                key != "draw_policy" && key != "children")
                throw ConfigError("AugmentSpec: unknown key '" + key + "'");
        }
        AugmentSpec s = make(aug_kind_from_string(j["kind"].get<std::string>()));
        if (j.contains("amplitude")) s.noise_amplitude = j["amplitude"].get<double>();
        if (j.contains("lo")) s.range_lo = j["lo"].get<double>();
        if (j.contains("hi")) s.range_hi = j["hi"].get<double>();
        if (j.contains("M")) s.resample.M = j["M"].get<int>();
        if (j.contains("N")) s.resample.N = j["N"].get<int>();
        if (j.contains("interpolation"))
            s.resample.interpolation = interp_from_string(j["interpolation"].get<std::string>());
        if (j.contains("mode")) s.resample.mode = block_mode_from_string(j["mode"].get<std::string>());
        if (j.contains("draw_policy"))
            s.resample.draw_policy = draw_policy_from_string(j["draw_policy"].get<std::string>());
        if (j.contains("children"))
            for (const auto& c : j["children"]) s.children.push_back(from_json(c));
        s.validate();
        return s;
    }
};

inline Window apply(const AugmentSpec& spec, const Window& w, Rng& rng) {
    spec.validate();
    switch (spec.kind) {
        case AugKind::identity: return w;
        case AugKind::noise: return noise(w, rng, spec.noise_amplitude);
        case AugKind::rotate: return rotate(w, rng);
        case AugKind::scale: return scale(w, rng, spec.range_lo, spec.range_hi);
        case AugKind::magnify: return magnify(w, rng, spec.range_lo, spec.range_hi);
        case AugKind::invert: return invert(w);
        case AugKind::reverse: return reverse(w);
        case AugKind::resample: return resample(w, spec.resample, rng);
        case AugKind::compose: {
            Window cur = w;
            for (const auto& c : spec.children) cur = apply(c, cur, rng);
            return cur;
        }
    }
    throw InvalidParams("apply: unhandled augmentation kind");
}

}  // namespace senres
