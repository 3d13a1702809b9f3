#pragma once

#include "sgsr/ops.hpp"
#include "sgsr/tensor.hpp"

namespace sgsr {

// The constant 3x3 operators: horizontal/vertical/diagonal difference
// kernels plus the 4-neighbor Laplacian. All rows sum to zero, so constant
// regions produce zero response; the directional family maps onto itself
// under 90-degree rotation up to sign.
struct FixedKernelBank {
    Tensor gx, gy, g_tl, g_tr, laplacian;

    FixedKernelBank() {
        gx = kernel3x3({0, 0, 0, //
                        1, 0, -1, //
                        0, 0, 0});
        gy = kernel3x3({0, 1, 0, //
                        0, 0, 0, //
                        0, -1, 0});
        g_tl = kernel3x3({1, 0, 0, //
                          0, 0, 0, //
                          0, 0, -1});
        g_tr = kernel3x3({0, 0, 1, //
                          0, 0, 0, //
                          -1, 0, 0});
        laplacian = kernel3x3({0, 1, 0, //
                               1, -4, 1, //
                               0, 1, 0});
    }

    static Tensor kernel3x3(std::initializer_list<double> vals) {
        return Tensor::from_data(Shape4(1, 1, 3, 3), std::vector<double>(vals));
    }
};

// Replicates a single 3x3 kernel across channels for a depthwise pass.
inline ag::Var depthwise_kernel(const Tensor& k, int channels) {
    Tensor w(Shape4(channels, 1, 3, 3));
    for (int c = 0; c < channels; ++c)
        for (int i = 0; i < 9; ++i) w.data[static_cast<std::size_t>(c) * 9 + i] = k.data[i];
    return ag::constant(std::move(w));
}

// Depthwise cross-correlation with one of the bank kernels: 1 pixel of
// mirrored border, stride 1, no bias; the kernel stays outside the trainable
// set. Mirrored (rather than zero) borders keep the zero-sum property exact
// on the full map: constant regions respond with exact zeros everywhere.
inline ag::Var directional_response(const ag::Var& x, const Tensor& kernel) {
    const int c = x->value.shape.c;
    return ag::conv2d(ag::mirror_pad_hw(x, 1), depthwise_kernel(kernel, c), nullptr, 1, 0, c);
}

// Combined edge magnitude of the four directional responses,
// sqrt(gx^2 + gy^2 + gtl^2 + gtr^2), smoothed by the sqrt_eps offset so the
// derivative stays finite where every response vanishes.
inline ag::Var edge_magnitude(const ag::Var& x, const FixedKernelBank& bank) {
    ag::Var rx = directional_response(x, bank.gx);
    ag::Var ry = directional_response(x, bank.gy);
    ag::Var rtl = directional_response(x, bank.g_tl);
    ag::Var rtr = directional_response(x, bank.g_tr);
    ag::Var sq = ag::add(ag::add(ag::mul(rx, rx), ag::mul(ry, ry)),
                         ag::add(ag::mul(rtl, rtl), ag::mul(rtr, rtr)));
    return ag::sqrt_eps(sq);
}

inline ag::Var laplacian_response(const ag::Var& x, const FixedKernelBank& bank) {
    return directional_response(x, bank.laplacian);
}

} // namespace sgsr
