#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "senres/common.hpp"
#include "senres/optim.hpp"
#include "senres/tensor.hpp"

namespace senres {

// SPRM parameter checkpoint.
// Layout: magic "SPRM", version u16, parameter count u32, then per parameter
// (name length u16, UTF-8 name, rank u8, dims u32 each, row-major float64
// little-endian values). Parameters are written in map order (sorted by
// name), so serialization of a given map is canonical and byte-stable; the
// reader rejects unsorted names, which makes every accepted byte string the
// canonical serialization of its contents.

inline constexpr uint16_t kSprmVersion = 1;
inline constexpr uint8_t kSprmMaxRank = 8;
// Per-parameter cap; bounds the allocation a corrupt dimension field can
// request before any payload bytes exist to justify it.
inline constexpr uint64_t kSprmMaxElements = 1ull << 24;

template <typename T>
void write_sprm(const ParamMap<T>& params, std::ostream& os) {
    os.write("SPRM", 4);
    write_u16(os, kSprmVersion);
    write_u32(os, static_cast<uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        if (name.empty() || name.size() > 0xffff)
            throw InvalidParams("write_sprm: parameter name length out of range: '" + name + "'");
        write_u16(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        if (t.rank() > kSprmMaxRank)
            throw InvalidParams("write_sprm: rank " + std::to_string(t.rank()) +
                                " exceeds limit for '" + name + "'");
        os.put(static_cast<char>(t.rank()));
        for (int64_t d : t.shape) write_u32(os, static_cast<uint32_t>(d));
        for (T v : t.data) write_f64(os, static_cast<double>(v));
    }
    if (!os) throw FormatError("write_sprm: stream write failed");
}

template <typename T>
void write_sprm(const ParamMap<T>& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("write_sprm: cannot open '" + path + "' for writing");
    write_sprm(params, os);
}

template <typename T>
ParamMap<T> read_sprm(std::istream& is) {
    char magic[4];
    detail::get_bytes(is, magic, 4, "magic");
    if (std::string(magic, 4) != "SPRM") throw FormatError("read_sprm: bad magic");
    uint16_t version = read_u16(is, "version");
    if (version != kSprmVersion)
        throw FormatError("read_sprm: unsupported version " + std::to_string(version));
    uint32_t count = read_u32(is, "parameter count");
    ParamMap<T> out;
    std::string prev;
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t nlen = read_u16(is, "name length");
        if (nlen == 0) throw FormatError("read_sprm: empty parameter name");
        std::string name(nlen, '\0');
        detail::get_bytes(is, name.data(), nlen, "name");
        if (i > 0 && name == prev) throw FormatError("read_sprm: duplicate parameter name");
        if (i > 0 && name < prev)
            throw FormatError("read_sprm: parameter names out of sorted order");
        prev = name;
        int c = is.get();
        if (c == std::char_traits<char>::eof())
            throw FormatError("truncated input while reading rank");
        uint8_t rank = static_cast<uint8_t>(c);
        if (rank > kSprmMaxRank)
            throw FormatError("read_sprm: rank " + std::to_string(rank) + " exceeds limit");
        Shape shape(rank);
        uint64_t n = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            uint32_t dim = read_u32(is, "dimension");
            if (dim == 0) throw FormatError("read_sprm: zero dimension in '" + name + "'");
            shape[d] = static_cast<int64_t>(dim);
            n *= dim;
            if (n > kSprmMaxElements)
                throw FormatError("read_sprm: element count exceeds limit in '" + name + "'");
        }
        std::vector<T> data(n);
        for (uint64_t e = 0; e < n; ++e)
            data[e] = static_cast<T>(read_f64(is, "parameter value"));
        out.emplace(std::move(name), Tensor<T>(std::move(shape), std::move(data)));
    }
    if (is.peek() != std::char_traits<char>::eof())
        throw FormatError("read_sprm: trailing bytes after final parameter");
    return out;
}

template <typename T>
ParamMap<T> read_sprm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("read_sprm: cannot open '" + path + "'");
    return read_sprm<T>(is);
}

}  // namespace senres
