#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "senres/common.hpp"

namespace senres {

// Project-wide deterministic random stream. mt19937_64 state evolution is
// fixed by the C++ standard; the draw functions below avoid
// std::uniform_*_distribution and std::shuffle, whose outputs are
// implementation-defined. Identical (seed, stream) pairs therefore produce
// identical draws on every platform.
class Rng {
   public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // Independent substream, e.g. one per window or per repetition.
    static Rng stream(uint64_t seed, uint64_t stream_id) {
        return Rng(mix(seed, stream_id));
    }

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

    // Unbiased integer in [0, n) via rejection.
    uint64_t below(uint64_t n) {
        if (n == 0) throw InvalidParams("Rng::below: n must be positive");
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    // Inclusive range.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        if (lo > hi) throw InvalidParams("Rng::uniform_int: empty range");
        return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo) + 1));
    }

    // Fisher-Yates with our own draws (std::shuffle is not reproducible
    // across standard libraries).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // splitmix64-style mixing, also usable to derive per-epoch seeds.
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

   private:
    std::mt19937_64 gen_;
};

}  // namespace senres
