#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sgsr/error.hpp"

namespace sgsr {

// Dense rank-4 shape in batch-channel-height-width order.
struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    Shape4() = default;
    Shape4(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
               static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }

    bool operator==(const Shape4&) const = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
               std::to_string(w) + ")";
    }
};

// Dense 64-bit tensor, row-major batch-channel-row-column order.
// A default-constructed tensor is empty (used as the "no gradient yet" state).
struct Tensor {
    Shape4 shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape4 s, double fill = 0.0) : shape(s), data(s.numel(), fill) {}

    static Tensor zeros(Shape4 s) { return Tensor(s); }
    static Tensor full(Shape4 s, double v) { return Tensor(s, v); }
    static Tensor scalar(double v) { return Tensor(Shape4(1, 1, 1, 1), v); }
    // 2-D matrix as a rank-4 tensor with unit batch/channel dims.
    static Tensor matrix(int rows, int cols, double fill = 0.0) {
        return Tensor(Shape4(1, 1, rows, cols), fill);
    }
    static Tensor from_data(Shape4 s, std::vector<double> v) {
        if (v.size() != s.numel())
            throw DimensionError("tensor data length " + std::to_string(v.size()) +
                                 " does not match shape " + s.str());
        Tensor t;
        t.shape = s;
        t.data = std::move(v);
        return t;
    }

    bool empty() const { return data.empty(); }
    std::size_t size() const { return data.size(); }

    std::size_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape.c + c) * shape.h + y) * shape.w + x;
    }
    double& at(int n, int c, int y, int x) { return data[index(n, c, y, x)]; }
    double at(int n, int c, int y, int x) const { return data[index(n, c, y, x)]; }

    // Matrix accessors for (1,1,R,C) tensors.
    int rows() const { return shape.h; }
    int cols() const { return shape.w; }
    double& m(int r, int c) { return data[static_cast<std::size_t>(r) * shape.w + c]; }
    double m(int r, int c) const { return data[static_cast<std::size_t>(r) * shape.w + c]; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape == b.shape) return;
    const Shape4& s = a.shape;
    const Shape4& t = b.shape;
    const char* axis = s.n != t.n ? "batch" : s.c != t.c ? "channel" : s.h != t.h ? "height" : "width";
    throw DimensionError(std::string(what) + ": shape mismatch on " + axis + " axis, " + s.str() +
                         " vs " + t.str());
}

inline bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace sgsr
