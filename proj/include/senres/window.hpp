#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "senres/common.hpp"

namespace senres {

inline constexpr int kNoLabel = -1;

// One fixed-length segment of multichannel sensor signal, stored time-major:
// data[t * channels + c]. Channel convention for 6-channel windows:
// 0-2 accelerometer xyz, 3-5 gyroscope xyz. Values are held as doubles in
// memory; the on-disk container uses float32.
struct Window {
    int64_t timesteps = 0;
    int64_t channels = 0;
    std::vector<double> data;
    double sample_rate_hz = 0.0;
    int label = kNoLabel;

    Window() = default;
    Window(int64_t t, int64_t c)
        : timesteps(t), channels(c), data(static_cast<size_t>(t * c), 0.0) {
        validate_shape();
    }

    double& at(int64_t t, int64_t c) { return data[static_cast<size_t>(t * channels + c)]; }
    double at(int64_t t, int64_t c) const { return data[static_cast<size_t>(t * channels + c)]; }

    void validate_shape() const {
        if (timesteps <= 1 || channels < 1)
            throw InvalidParams("Window: need timesteps > 1 and channels >= 1, got " +
                                std::to_string(timesteps) + "x" + std::to_string(channels));
        if (data.size() != static_cast<size_t>(timesteps * channels))
            throw ShapeError("Window: data size does not match shape");
    }

    void validate_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) throw InvalidParams("Window: non-finite value");
    }

    // Extract one channel as a contiguous sequence.
    std::vector<double> channel(int64_t c) const {
        std::vector<double> out(static_cast<size_t>(timesteps));
        for (int64_t t = 0; t < timesteps; ++t) out[static_cast<size_t>(t)] = at(t, c);
        return out;
    }

    void set_channel(int64_t c, const std::vector<double>& seq) {
        if (static_cast<int64_t>(seq.size()) != timesteps)
            throw ShapeError("set_channel: length mismatch");
        for (int64_t t = 0; t < timesteps; ++t) at(t, c) = seq[static_cast<size_t>(t)];
    }

    bool operator==(const Window& o) const {
        return timesteps == o.timesteps && channels == o.channels && data == o.data &&
               sample_rate_hz == o.sample_rate_hz && label == o.label;
    }
};

}  // namespace senres
