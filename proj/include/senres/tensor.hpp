#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "senres/common.hpp"

namespace senres {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

// Dense row-major tensor. Invariant: product(shape) == data.size().
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(Shape s, std::vector<T> d, bool rg = false)
        : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s, bool rg = false) {
        size_t n = static_cast<size_t>(shape_numel(s));
        return Tensor(std::move(s), std::vector<T>(n, T(0)), rg);
    }

    static Tensor full(Shape s, T v, bool rg = false) {
        size_t n = static_cast<size_t>(shape_numel(s));
        return Tensor(std::move(s), std::vector<T>(n, v), rg);
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t dim(size_t i) const { return shape.at(i); }
    size_t rank() const { return shape.size(); }

    // 2-D accessors for the common matrix case.
    T& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
    T at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> d(data.size());
        for (size_t i = 0; i < data.size(); ++i) d[i] = static_cast<U>(data[i]);
        return Tensor<U>(shape, std::move(d), requires_grad);
    }
};

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape != b.shape)
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                         " vs " + shape_str(b.shape));
}

}  // namespace senres
