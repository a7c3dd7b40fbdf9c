#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <istream>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace senres {

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these to exit codes: user/config/parse -> 2,
// numeric failure -> 3.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
    using Error::Error;
};

struct InvalidParams : Error {
    using Error::Error;
};

struct InputTooShort : InvalidParams {
    using InvalidParams::InvalidParams;
};

struct ParseError : Error {
    using Error::Error;
};

struct SchemaError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

struct InvalidState : Error {
    using Error::Error;
};

struct InsufficientData : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Little-endian binary I/O. File formats are pinned to LE regardless of host.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void get_bytes(std::istream& is, void* p, size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
        throw FormatError(std::string("truncated input while reading ") + what);
}

}  // namespace detail

inline void write_u16(std::ostream& os, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    detail::put_bytes(os, b, 2);
}

inline void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    detail::put_bytes(os, b, 4);
}

inline void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    detail::put_bytes(os, b, 8);
}

inline void write_f32(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32(os, u);
}

inline void write_f64(std::ostream& os, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    write_u64(os, u);
}

inline uint16_t read_u16(std::istream& is, const char* what = "u16") {
    unsigned char b[2];
    detail::get_bytes(is, b, 2, what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t read_u32(std::istream& is, const char* what = "u32") {
    unsigned char b[4];
    detail::get_bytes(is, b, 4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

inline uint64_t read_u64(std::istream& is, const char* what = "u64") {
    unsigned char b[8];
    detail::get_bytes(is, b, 8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

inline float read_f32(std::istream& is, const char* what = "f32") {
    uint32_t u = read_u32(is, what);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

inline double read_f64(std::istream& is, const char* what = "f64") {
    uint64_t u = read_u64(is, what);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

// FNV-1a 64, used for manifest provenance hashes.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// Default worker count: SENRES_WORKERS env var, else hardware concurrency.
inline int default_workers() {
    if (const char* env = std::getenv("SENRES_WORKERS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; fn must be
// safe to call concurrently for distinct i.
template <typename Fn>
void parallel_for(int64_t n, int workers, Fn&& fn) {
    if (n <= 0) return;
    if (workers <= 1 || n == 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    int nthreads = static_cast<int>(std::min<int64_t>(workers, n));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(nthreads));
    std::exception_ptr first_error;
    std::mutex err_mutex;
    int64_t chunk = (n + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
        int64_t lo = t * chunk;
        int64_t hi = std::min<int64_t>(n, lo + chunk);
        threads.emplace_back([&, lo, hi] {
            try {
                for (int64_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace senres
