#pragma once

// Naive reference implementations used as oracles. These deliberately use
// plain per-output loops and share no code with the library paths they check.

#include <cmath>
#include <vector>

#include "sgsr/tensor.hpp"

namespace ref {

using sgsr::Shape4;
using sgsr::Tensor;

// Direct sliding-window cross-correlation, one output element at a time.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int padding,
                     int groups) {
    const int N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const int OC = w.shape.n, ICg = w.shape.c, KH = w.shape.h, KW = w.shape.w;
    const int OH = (H + 2 * padding - KH) / stride + 1;
    const int OW = (W + 2 * padding - KW) / stride + 1;
    const int ocg = OC / groups;
    (void)C;
    Tensor out(Shape4(N, OC, OH, OW));
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc)
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    double acc = bias ? bias->data[oc] : 0.0;
                    for (int ic = 0; ic < ICg; ++ic)
                        for (int ky = 0; ky < KH; ++ky)
                            for (int kx = 0; kx < KW; ++kx) {
                                const int iy = oy * stride + ky - padding;
                                const int ix = ox * stride + kx - padding;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += x.at(n, (oc / ocg) * ICg + ic, iy, ix) * w.at(oc, ic, ky, kx);
                            }
                    out.at(n, oc, oy, ox) = acc;
                }
    return out;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const int N = a.rows(), K = a.cols(), M = b.cols();
    Tensor out = Tensor::matrix(N, M);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < M; ++j) {
            double acc = 0.0;
            for (int k = 0; k < K; ++k) acc += a.m(i, k) * b.m(k, j);
            out.m(i, j) = acc;
        }
    return out;
}

// Spatial softmax per (n, c) plane.
inline Tensor softmax_spatial(const Tensor& x) {
    Tensor out(x.shape);
    const int plane = x.shape.h * x.shape.w;
    for (int n = 0; n < x.shape.n; ++n)
        for (int c = 0; c < x.shape.c; ++c) {
            const std::size_t off = (static_cast<std::size_t>(n) * x.shape.c + c) * plane;
            double m = x.data[off];
            for (int i = 1; i < plane; ++i) m = std::max(m, x.data[off + i]);
            double z = 0.0;
            for (int i = 0; i < plane; ++i) z += std::exp(x.data[off + i] - m);
            for (int i = 0; i < plane; ++i) out.data[off + i] = std::exp(x.data[off + i] - m) / z;
        }
    return out;
}

// Half-sample symmetric reflection by explicit index arithmetic.
inline int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

inline Tensor reflect_pad(const Tensor& x, int oh, int ow) {
    Tensor out(Shape4(x.shape.n, x.shape.c, oh, ow));
    for (int n = 0; n < x.shape.n; ++n)
        for (int c = 0; c < x.shape.c; ++c)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx)
                    out.at(n, c, y, xx) = x.at(n, c, reflect(y, x.shape.h), reflect(xx, x.shape.w));
    return out;
}

// Mirror padding on all four borders.
inline Tensor mirror_pad(const Tensor& x, int pad) {
    Tensor out(Shape4(x.shape.n, x.shape.c, x.shape.h + 2 * pad, x.shape.w + 2 * pad));
    for (int n = 0; n < x.shape.n; ++n)
        for (int c = 0; c < x.shape.c; ++c)
            for (int y = 0; y < out.shape.h; ++y)
                for (int xx = 0; xx < out.shape.w; ++xx)
                    out.at(n, c, y, xx) =
                        x.at(n, c, reflect(y - pad, x.shape.h), reflect(xx - pad, x.shape.w));
    return out;
}

// Depthwise response of a constant 3x3 kernel over mirrored borders.
inline Tensor fixed_kernel_response(const Tensor& x, const Tensor& k3) {
    const int c = x.shape.c;
    Tensor kd(Shape4(c, 1, 3, 3));
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < 9; ++i) kd.data[static_cast<std::size_t>(ch) * 9 + i] = k3.data[i];
    return conv2d(mirror_pad(x, 1), kd, nullptr, 1, 0, c);
}

// Per-window weighted-sum SSIM (11x11 Gaussian, sigma 1.5, valid region).
inline double ssim(const Tensor& a, const Tensor& b) {
    const int win = 11;
    const double sigma = 1.5;
    double taps2d[11][11];
    double sum = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double dy = i - win / 2, dx = j - win / 2;
            taps2d[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            sum += taps2d[i][j];
        }
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) taps2d[i][j] /= sum;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const Shape4 s = a.shape;
    double total = 0.0;
    std::size_t count = 0;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y + win <= s.h; ++y)
                for (int x = 0; x + win <= s.w; ++x) {
                    double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                    for (int i = 0; i < win; ++i)
                        for (int j = 0; j < win; ++j) {
                            const double va = a.at(n, c, y + i, x + j);
                            const double vb = b.at(n, c, y + i, x + j);
                            const double t = taps2d[i][j];
                            ma += t * va;
                            mb += t * vb;
                            saa += t * va * va;
                            sbb += t * vb * vb;
                            sab += t * va * vb;
                        }
                    const double var_a = saa - ma * ma;
                    const double var_b = sbb - mb * mb;
                    const double cov = sab - ma * mb;
                    total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                             ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                    ++count;
                }
    return total / static_cast<double>(count);
}

// Dense windowed graph attention, all loops: S = HH^T with zero diagonal,
// degrees over |S|, symmetric normalization, H' = relu(A H W) + H.
inline Tensor asgnn_dense(const Tensor& x, const Tensor& w_g, int p) {
    const Shape4 s = x.shape;
    const int ph = (s.h + p - 1) / p * p;
    const int pw = (s.w + p - 1) / p * p;
    Tensor xp = (ph != s.h || pw != s.w) ? reflect_pad(x, ph, pw) : x;

    Tensor out(Shape4(s.n, s.c, ph, pw));
    const int nodes = p * p;
    for (int n = 0; n < s.n; ++n)
        for (int gy = 0; gy < ph / p; ++gy)
            for (int gx = 0; gx < pw / p; ++gx) {
                std::vector<std::vector<double>> h(nodes, std::vector<double>(s.c));
                for (int i = 0; i < nodes; ++i)
                    for (int c = 0; c < s.c; ++c)
                        h[i][c] = xp.at(n, c, gy * p + i / p, gx * p + i % p);

                std::vector<std::vector<double>> sim(nodes, std::vector<double>(nodes, 0.0));
                for (int i = 0; i < nodes; ++i)
                    for (int j = 0; j < nodes; ++j) {
                        if (i == j) continue;
                        double acc = 0.0;
                        for (int c = 0; c < s.c; ++c) acc += h[i][c] * h[j][c];
                        sim[i][j] = acc;
                    }
                std::vector<double> deg(nodes, 0.0);
                for (int i = 0; i < nodes; ++i)
                    for (int j = 0; j < nodes; ++j) deg[i] += std::fabs(sim[i][j]);
                std::vector<std::vector<double>> norm(nodes, std::vector<double>(nodes, 0.0));
                for (int i = 0; i < nodes; ++i)
                    for (int j = 0; j < nodes; ++j) {
                        if (deg[i] <= 1e-10 || deg[j] <= 1e-10) continue;
                        norm[i][j] = sim[i][j] / (std::sqrt(deg[i]) * std::sqrt(deg[j]));
                    }
                // AHW
                std::vector<std::vector<double>> ah(nodes, std::vector<double>(s.c, 0.0));
                for (int i = 0; i < nodes; ++i)
                    for (int c = 0; c < s.c; ++c)
                        for (int j = 0; j < nodes; ++j) ah[i][c] += norm[i][j] * h[j][c];
                for (int i = 0; i < nodes; ++i)
                    for (int c = 0; c < s.c; ++c) {
                        double acc = 0.0;
                        for (int k = 0; k < s.c; ++k) acc += ah[i][k] * w_g.m(k, c);
                        const double prop = acc > 0.0 ? acc : 0.0;
                        out.at(n, c, gy * p + i / p, gx * p + i % p) = prop + h[i][c];
                    }
            }

    if (ph == s.h && pw == s.w) return out;
    Tensor cropped(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) cropped.at(n, c, y, x) = out.at(n, c, y, x);
    return cropped;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

} // namespace ref
