#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "sgsr/autograd.hpp"
#include "sgsr/interp.hpp"
#include "sgsr/tensor.hpp"

namespace sgsr::ag {

inline constexpr double kSqrtEps = 1e-12;

namespace detail {

inline Tensor& grad_buf(Node& n, std::size_t i) {
    n.parents[i]->ensure_grad();
    return n.parents[i]->grad;
}

inline bool wants_grad(Node& n, std::size_t i) { return n.parents[i]->requires_grad; }

// Output index range [lo, hi] for which i = o*stride + k - pad stays inside
// [0, in). Empty range is signalled by lo > hi.
inline std::pair<int, int> conv_valid_range(int k, int pad, int stride, int in, int out) {
    int a = pad - k;
    int lo = a <= 0 ? 0 : (a + stride - 1) / stride;
    int b = in - 1 + pad - k;
    int hi = b < 0 ? -1 : std::min(out - 1, b / stride);
    return {lo, hi};
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    return make_node(std::move(out), "add", {a, b}, [](Node& n) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (!detail::wants_grad(n, p)) continue;
            Tensor& g = detail::grad_buf(n, p);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
    return make_node(std::move(out), "sub", {a, b}, [](Node& n) {
        if (detail::wants_grad(n, 0)) {
            Tensor& g = detail::grad_buf(n, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (detail::wants_grad(n, 1)) {
            Tensor& g = detail::grad_buf(n, 1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return make_node(std::move(out), "mul", {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (detail::wants_grad(n, 0)) {
            Tensor& g = detail::grad_buf(n, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
        }
        if (detail::wants_grad(n, 1)) {
            Tensor& g = detail::grad_buf(n, 1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
        }
    });
}

inline Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (double& v : out.data) v *= s;
    return make_node(std::move(out), "scale", {a}, [s](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        Tensor& g = detail::grad_buf(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
    });
}

inline Var relu(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return make_node(std::move(out), "relu", {a}, [](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        const Tensor& av = n.parents[0]->value;
        Tensor& g = detail::grad_buf(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (av[i] > 0.0) g[i] += n.grad[i];
    });
}

inline Var abs(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = std::fabs(v);
    return make_node(std::move(out), "abs", {a}, [](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        const Tensor& av = n.parents[0]->value;
        Tensor& g = detail::grad_buf(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (av[i] > 0.0)
                g[i] += n.grad[i];
            else if (av[i] < 0.0)
                g[i] -= n.grad[i];
        }
    });
}

// sqrt(x + eps); the offset keeps the derivative finite at x = 0.
inline Var sqrt_eps(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = std::sqrt(v + kSqrtEps);
    return make_node(std::move(out), "sqrt_eps", {a}, [](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        Tensor& g = detail::grad_buf(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 0.5 / n.value[i] * n.grad[i];
    });
}

// x^(-1/2) where x > threshold, else exactly 0. Used for degree
// normalization, where zero-degree rows must stay zero.
inline Var rsqrt_or_zero(const Var& a, double threshold) {
    Tensor out = a->value;
    for (double& v : out.data) v = v > threshold ? 1.0 / std::sqrt(v) : 0.0;
    return make_node(std::move(out), "rsqrt_or_zero", {a}, [threshold](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        const Tensor& av = n.parents[0]->value;
        Tensor& g = detail::grad_buf(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (av[i] > threshold) {
                double y = n.value[i];
                g[i] += -0.5 * y * y * y * n.grad[i];
            }
    });
}

inline Var sum(const Var& a) {
    double acc = 0.0;
    for (double v : a->value.data) acc += v;
    return make_node(Tensor::scalar(acc), "sum", {a}, [](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        Tensor& g = detail::grad_buf(n, 0);
        double gv = n.grad[0];
        for (double& v : g.data) v += gv;
    });
}

inline Var mean(const Var& a) {
    if (a->value.size() == 0) throw DimensionError("mean: empty tensor");
    double acc = 0.0;
    for (double v : a->value.data) acc += v;
    double inv = 1.0 / static_cast<double>(a->value.size());
    return make_node(Tensor::scalar(acc * inv), "mean", {a}, [inv](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        Tensor& g = detail::grad_buf(n, 0);
        double gv = n.grad[0] * inv;
        for (double& v : g.data) v += gv;
    });
}

// Mean absolute difference. Backward is sign(pred - target)/count, zero at
// exact ties.
inline Var l1_loss(const Var& pred, const Var& target) {
    require_same_shape(pred->value, target->value, "l1_loss");
    return mean(abs(sub(pred, target)));
}

// ---------------------------------------------------------------------------
// Channel concat / slice
// ---------------------------------------------------------------------------

inline Var concat_channels(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_channels: no inputs");
    const Shape4 s0 = parts[0]->value.shape;
    int ctotal = 0;
    for (const Var& p : parts) {
        const Shape4& s = p->value.shape;
        if (s.n != s0.n) throw DimensionError("concat_channels: batch axis mismatch");
        if (s.h != s0.h) throw DimensionError("concat_channels: height axis mismatch");
        if (s.w != s0.w) throw DimensionError("concat_channels: width axis mismatch");
        ctotal += s.c;
    }
    Tensor out(Shape4(s0.n, ctotal, s0.h, s0.w));
    const std::size_t plane = static_cast<std::size_t>(s0.h) * s0.w;
    for (int n = 0; n < s0.n; ++n) {
        std::size_t off = static_cast<std::size_t>(n) * ctotal * plane;
        for (const Var& p : parts) {
            const Tensor& t = p->value;
            std::size_t len = static_cast<std::size_t>(t.shape.c) * plane;
            std::copy_n(t.data.begin() + static_cast<std::size_t>(n) * len, len,
                        out.data.begin() + off);
            off += len;
        }
    }
    return make_node(std::move(out), "concat_channels", {parts.begin(), parts.end()}, [](Node& n) {
        const Shape4 os = n.value.shape;
        const std::size_t plane = static_cast<std::size_t>(os.h) * os.w;
        for (int b = 0; b < os.n; ++b) {
            std::size_t off = static_cast<std::size_t>(b) * os.c * plane;
            for (std::size_t p = 0; p < n.parents.size(); ++p) {
                std::size_t len = static_cast<std::size_t>(n.parents[p]->value.shape.c) * plane;
                if (detail::wants_grad(n, p)) {
                    Tensor& g = detail::grad_buf(n, p);
                    std::size_t dst = static_cast<std::size_t>(b) * len;
                    for (std::size_t i = 0; i < len; ++i) g[dst + i] += n.grad[off + i];
                }
                off += len;
            }
        }
    });
}

inline Var slice_channels(const Var& a, int c0, int c1) {
    const Shape4 s = a->value.shape;
    if (c0 < 0 || c1 > s.c || c0 >= c1)
        throw DimensionError("slice_channels: invalid channel range [" + std::to_string(c0) + "," +
                             std::to_string(c1) + ") for " + s.str());
    Tensor out(Shape4(s.n, c1 - c0, s.h, s.w));
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        std::copy_n(a->value.data.begin() + (static_cast<std::size_t>(n) * s.c + c0) * plane,
                    static_cast<std::size_t>(c1 - c0) * plane,
                    out.data.begin() + static_cast<std::size_t>(n) * (c1 - c0) * plane);
    return make_node(std::move(out), "slice_channels", {a}, [c0](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        Tensor& g = detail::grad_buf(n, 0);
        const Shape4 s = n.parents[0]->value.shape;
        const Shape4 os = n.value.shape;
        const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
        for (int b = 0; b < s.n; ++b) {
            std::size_t src = static_cast<std::size_t>(b) * os.c * plane;
            std::size_t dst = (static_cast<std::size_t>(b) * s.c + c0) * plane;
            for (std::size_t i = 0; i < static_cast<std::size_t>(os.c) * plane; ++i)
                g[dst + i] += n.grad[src + i];
        }
    });
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

enum class SoftmaxAxis {
    channel, // normalize across channels at each (n, y, x)
    spatial  // normalize across the flattened h*w positions of each (n, c)
};

inline Var softmax(const Var& a, SoftmaxAxis axis) {
    const Shape4 s = a->value.shape;
    if (axis == SoftmaxAxis::spatial && s.h * s.w == 0)
        throw DimensionError("softmax: empty spatial axis");
    if (axis == SoftmaxAxis::channel && s.c == 0)
        throw DimensionError("softmax: empty channel axis");

    Tensor out(s);
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    if (axis == SoftmaxAxis::spatial) {
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                const double* xv = &a->value.data[(static_cast<std::size_t>(n) * s.c + c) * plane];
                double* yv = &out.data[(static_cast<std::size_t>(n) * s.c + c) * plane];
                double m = xv[0];
                for (std::size_t i = 1; i < plane; ++i) m = std::max(m, xv[i]);
                double z = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    yv[i] = std::exp(xv[i] - m);
                    z += yv[i];
                }
                double inv = 1.0 / z;
                for (std::size_t i = 0; i < plane; ++i) yv[i] *= inv;
            }
    } else {
        for (int n = 0; n < s.n; ++n)
            for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t base = static_cast<std::size_t>(n) * s.c * plane + i;
                double m = a->value[base];
                for (int c = 1; c < s.c; ++c) m = std::max(m, a->value[base + c * plane]);
                double z = 0.0;
                for (int c = 0; c < s.c; ++c) {
                    double e = std::exp(a->value[base + c * plane] - m);
                    out[base + c * plane] = e;
                    z += e;
                }
                double inv = 1.0 / z;
                for (int c = 0; c < s.c; ++c) out[base + c * plane] *= inv;
            }
    }
    return make_node(std::move(out), "softmax", {a}, [axis](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        Tensor& g = detail::grad_buf(n, 0);
        const Tensor& y = n.value;
        const Shape4 s = y.shape;
        const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
        if (axis == SoftmaxAxis::spatial) {
            for (int b = 0; b < s.n; ++b)
                for (int c = 0; c < s.c; ++c) {
                    const std::size_t off = (static_cast<std::size_t>(b) * s.c + c) * plane;
                    double dot = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) dot += n.grad[off + i] * y[off + i];
                    for (std::size_t i = 0; i < plane; ++i)
                        g[off + i] += y[off + i] * (n.grad[off + i] - dot);
                }
        } else {
            for (int b = 0; b < s.n; ++b)
                for (std::size_t i = 0; i < plane; ++i) {
                    const std::size_t base = static_cast<std::size_t>(b) * s.c * plane + i;
                    double dot = 0.0;
                    for (int c = 0; c < s.c; ++c) dot += n.grad[base + c * plane] * y[base + c * plane];
                    for (int c = 0; c < s.c; ++c)
                        g[base + c * plane] += y[base + c * plane] * (n.grad[base + c * plane] - dot);
                }
        }
    });
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, zero padding)
// ---------------------------------------------------------------------------

namespace detail {

inline void conv2d_validate(const Shape4& x, const Shape4& w, const Tensor* bias, int stride,
                            int padding, int groups) {
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
    if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
    if (groups < 1) throw ConfigError("conv2d: groups must be >= 1");
    if (w.h % 2 == 0) throw DimensionError("conv2d: kernel height axis must be odd");
    if (w.w % 2 == 0) throw DimensionError("conv2d: kernel width axis must be odd");
    if (x.c % groups != 0)
        throw ConfigError("conv2d: groups=" + std::to_string(groups) +
                          " does not divide input channels=" + std::to_string(x.c));
    if (w.n % groups != 0)
        throw ConfigError("conv2d: groups=" + std::to_string(groups) +
                          " does not divide output channels=" + std::to_string(w.n));
    if (w.c != x.c / groups)
        throw DimensionError("conv2d: kernel input-channel axis is " + std::to_string(w.c) +
                             ", expected " + std::to_string(x.c / groups));
    if (bias && !(bias->shape == Shape4(1, w.n, 1, 1)))
        throw DimensionError("conv2d: bias channel axis must be " + std::to_string(w.n));
    if (x.h + 2 * padding < w.h) throw DimensionError("conv2d: height axis smaller than kernel");
    if (x.w + 2 * padding < w.w) throw DimensionError("conv2d: width axis smaller than kernel");
}

} // namespace detail

inline Tensor conv2d_value(const Tensor& x, const Tensor& w, const Tensor* bias, int stride,
                           int padding, int groups) {
    detail::conv2d_validate(x.shape, w.shape, bias, stride, padding, groups);
    const int N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const int OC = w.shape.n, ICg = w.shape.c, KH = w.shape.h, KW = w.shape.w;
    const int OH = (H + 2 * padding - KH) / stride + 1;
    const int OW = (W + 2 * padding - KW) / stride + 1;
    const int ocg = OC / groups;
    (void)C;
    Tensor out(Shape4(N, OC, OH, OW));
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc) {
            double* op = &out.data[out.index(n, oc, 0, 0)];
            if (bias) {
                const double bv = bias->data[oc];
                for (int i = 0; i < OH * OW; ++i) op[i] = bv;
            }
            const int g = oc / ocg;
            for (int ic = 0; ic < ICg; ++ic) {
                const double* xp = &x.data[x.index(n, g * ICg + ic, 0, 0)];
                const double* wp = &w.data[w.index(oc, ic, 0, 0)];
                for (int ky = 0; ky < KH; ++ky) {
                    auto [oy0, oy1] = detail::conv_valid_range(ky, padding, stride, H, OH);
                    for (int kx = 0; kx < KW; ++kx) {
                        const double wv = wp[ky * KW + kx];
                        if (wv == 0.0) continue;
                        auto [ox0, ox1] = detail::conv_valid_range(kx, padding, stride, W, OW);
                        for (int oy = oy0; oy <= oy1; ++oy) {
                            const double* xrow = xp + static_cast<std::size_t>(oy * stride + ky - padding) * W;
                            double* orow = op + static_cast<std::size_t>(oy) * OW;
                            for (int ox = ox0; ox <= ox1; ++ox)
                                orow[ox] += wv * xrow[ox * stride + kx - padding];
                        }
                    }
                }
            }
        }
    return out;
}

namespace detail {

inline void conv2d_backward_input(const Tensor& go, const Tensor& w, Tensor& gx, int stride,
                                  int padding, int groups) {
    const int N = gx.shape.n, H = gx.shape.h, W = gx.shape.w;
    const int OC = w.shape.n, ICg = w.shape.c, KH = w.shape.h, KW = w.shape.w;
    const int OH = go.shape.h, OW = go.shape.w;
    const int ocg = OC / groups;
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc) {
            const double* gop = &go.data[go.index(n, oc, 0, 0)];
            const int g = oc / ocg;
            for (int ic = 0; ic < ICg; ++ic) {
                double* gxp = &gx.data[gx.index(n, g * ICg + ic, 0, 0)];
                const double* wp = &w.data[w.index(oc, ic, 0, 0)];
                for (int ky = 0; ky < KH; ++ky) {
                    auto [oy0, oy1] = conv_valid_range(ky, padding, stride, H, OH);
                    for (int kx = 0; kx < KW; ++kx) {
                        const double wv = wp[ky * KW + kx];
                        if (wv == 0.0) continue;
                        auto [ox0, ox1] = conv_valid_range(kx, padding, stride, W, OW);
                        for (int oy = oy0; oy <= oy1; ++oy) {
                            double* gxrow = gxp + static_cast<std::size_t>(oy * stride + ky - padding) * W;
                            const double* gorow = gop + static_cast<std::size_t>(oy) * OW;
                            for (int ox = ox0; ox <= ox1; ++ox)
                                gxrow[ox * stride + kx - padding] += wv * gorow[ox];
                        }
                    }
                }
            }
        }
}

inline void conv2d_backward_weight(const Tensor& go, const Tensor& x, Tensor& gw, int stride,
                                   int padding, int groups) {
    const int N = x.shape.n, H = x.shape.h, W = x.shape.w;
    const int OC = gw.shape.n, ICg = gw.shape.c, KH = gw.shape.h, KW = gw.shape.w;
    const int OH = go.shape.h, OW = go.shape.w;
    const int ocg = OC / groups;
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc) {
            const double* gop = &go.data[go.index(n, oc, 0, 0)];
            const int g = oc / ocg;
            for (int ic = 0; ic < ICg; ++ic) {
                const double* xp = &x.data[x.index(n, g * ICg + ic, 0, 0)];
                double* gwp = &gw.data[gw.index(oc, ic, 0, 0)];
                for (int ky = 0; ky < KH; ++ky) {
                    auto [oy0, oy1] = conv_valid_range(ky, padding, stride, H, OH);
                    for (int kx = 0; kx < KW; ++kx) {
                        auto [ox0, ox1] = conv_valid_range(kx, padding, stride, W, OW);
                        double acc = 0.0;
                        for (int oy = oy0; oy <= oy1; ++oy) {
                            const double* xrow = xp + static_cast<std::size_t>(oy * stride + ky - padding) * W;
                            const double* gorow = gop + static_cast<std::size_t>(oy) * OW;
                            for (int ox = ox0; ox <= ox1; ++ox)
                                acc += xrow[ox * stride + kx - padding] * gorow[ox];
                        }
                        gwp[ky * KW + kx] += acc;
                    }
                }
            }
        }
}

inline void conv2d_backward_bias(const Tensor& go, Tensor& gb) {
    const int N = go.shape.n, OC = go.shape.c;
    const std::size_t plane = static_cast<std::size_t>(go.shape.h) * go.shape.w;
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc) {
            const double* gop = &go.data[(static_cast<std::size_t>(n) * OC + oc) * plane];
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += gop[i];
            gb[oc] += acc;
        }
}

} // namespace detail

// Cross-correlation with zero padding; bias may be null. Kernel layout is
// (out_ch, in_ch/groups, kh, kw) on the rank-4 tensor axes.
inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1, int padding = 0,
                  int groups = 1) {
    Tensor out = conv2d_value(x->value, w->value, b ? &b->value : nullptr, stride, padding, groups);
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_node(std::move(out), "conv2d", std::move(parents),
                     [stride, padding, groups, has_bias = static_cast<bool>(b)](Node& n) {
                         if (detail::wants_grad(n, 0))
                             detail::conv2d_backward_input(n.grad, n.parents[1]->value,
                                                           detail::grad_buf(n, 0), stride, padding,
                                                           groups);
                         if (detail::wants_grad(n, 1))
                             detail::conv2d_backward_weight(n.grad, n.parents[0]->value,
                                                            detail::grad_buf(n, 1), stride, padding,
                                                            groups);
                         if (has_bias && detail::wants_grad(n, 2))
                             detail::conv2d_backward_bias(n.grad, detail::grad_buf(n, 2));
                     });
}

// ---------------------------------------------------------------------------
// Pixel shuffle
// ---------------------------------------------------------------------------

inline Var pixel_shuffle(const Var& a, int r) {
    const Shape4 s = a->value.shape;
    if (r < 1) throw ConfigError("pixel_shuffle: factor must be >= 1");
    if (s.c % (r * r) != 0)
        throw ConfigError("pixel_shuffle: channels=" + std::to_string(s.c) +
                          " not divisible by r^2=" + std::to_string(r * r));
    const Shape4 os(s.n, s.c / (r * r), s.h * r, s.w * r);
    Tensor out(os);
    for (int n = 0; n < os.n; ++n)
        for (int c = 0; c < os.c; ++c)
            for (int y = 0; y < os.h; ++y)
                for (int x = 0; x < os.w; ++x)
                    out.at(n, c, y, x) =
                        a->value.at(n, c * r * r + (y % r) * r + (x % r), y / r, x / r);
    return make_node(std::move(out), "pixel_shuffle", {a}, [r](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        Tensor& g = detail::grad_buf(n, 0);
        const Shape4 os = n.value.shape;
        for (int b = 0; b < os.n; ++b)
            for (int c = 0; c < os.c; ++c)
                for (int y = 0; y < os.h; ++y)
                    for (int x = 0; x < os.w; ++x)
                        g.at(b, c * r * r + (y % r) * r + (x % r), y / r, x / r) +=
                            n.grad.at(b, c, y, x);
    });
}

inline Var pixel_unshuffle(const Var& a, int r) {
    const Shape4 s = a->value.shape;
    if (r < 1) throw ConfigError("pixel_unshuffle: factor must be >= 1");
    if (s.h % r != 0 || s.w % r != 0)
        throw DimensionError("pixel_unshuffle: spatial axes not divisible by r");
    const Shape4 os(s.n, s.c * r * r, s.h / r, s.w / r);
    Tensor out(os);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x)
                    out.at(n, c * r * r + (y % r) * r + (x % r), y / r, x / r) =
                        a->value.at(n, c, y, x);
    return make_node(std::move(out), "pixel_unshuffle", {a}, [r](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        Tensor& g = detail::grad_buf(n, 0);
        const Shape4 s = g.shape;
        for (int b = 0; b < s.n; ++b)
            for (int c = 0; c < s.c; ++c)
                for (int y = 0; y < s.h; ++y)
                    for (int x = 0; x < s.w; ++x)
                        g.at(b, c, y, x) +=
                            n.grad.at(b, c * r * r + (y % r) * r + (x % r), y / r, x / r);
    });
}

// ---------------------------------------------------------------------------
// Matrix ops on (1,1,R,C) tensors
// ---------------------------------------------------------------------------

namespace detail {

inline void require_matrix(const Tensor& t, const char* what) {
    if (t.shape.n != 1 || t.shape.c != 1)
        throw DimensionError(std::string(what) + ": expected matrix tensor (1,1,R,C), got " +
                             t.shape.str());
}

// out[i][j] += sum_k a[i][k] b[k][j]
inline void matmul_acc(const double* a, const double* b, double* out, int N, int K, int M) {
    for (int i = 0; i < N; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * K;
        double* orow = out + static_cast<std::size_t>(i) * M;
        for (int k = 0; k < K; ++k) {
            const double av = arow[k];
            const double* brow = b + static_cast<std::size_t>(k) * M;
            for (int j = 0; j < M; ++j) orow[j] += av * brow[j];
        }
    }
}

// out[i][k] += sum_j a[i][j] b[k][j]   (a * b^T)
inline void matmul_nt_acc(const double* a, const double* b, double* out, int N, int J, int K) {
    for (int i = 0; i < N; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * J;
        double* orow = out + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const double* brow = b + static_cast<std::size_t>(k) * J;
            double acc = 0.0;
            for (int j = 0; j < J; ++j) acc += arow[j] * brow[j];
            orow[k] += acc;
        }
    }
}

// out[k][j] += sum_i a[i][k] b[i][j]   (a^T * b)
inline void matmul_tn_acc(const double* a, const double* b, double* out, int I, int K, int J) {
    for (int i = 0; i < I; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * K;
        const double* brow = b + static_cast<std::size_t>(i) * J;
        for (int k = 0; k < K; ++k) {
            const double av = arow[k];
            double* orow = out + static_cast<std::size_t>(k) * J;
            for (int j = 0; j < J; ++j) orow[j] += av * brow[j];
        }
    }
}

} // namespace detail

inline Var matmul(const Var& a, const Var& b) {
    detail::require_matrix(a->value, "matmul");
    detail::require_matrix(b->value, "matmul");
    const int N = a->value.rows(), K = a->value.cols();
    const int K2 = b->value.rows(), M = b->value.cols();
    if (K != K2)
        throw DimensionError("matmul: inner axis mismatch, " + std::to_string(K) + " vs " +
                             std::to_string(K2));
    Tensor out = Tensor::matrix(N, M);
    detail::matmul_acc(a->value.data.data(), b->value.data.data(), out.data.data(), N, K, M);
    return make_node(std::move(out), "matmul", {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        const int N = av.rows(), K = av.cols(), M = bv.cols();
        if (detail::wants_grad(n, 0))
            detail::matmul_nt_acc(n.grad.data.data(), bv.data.data(),
                                  detail::grad_buf(n, 0).data.data(), N, M, K);
        if (detail::wants_grad(n, 1))
            detail::matmul_tn_acc(av.data.data(), n.grad.data.data(),
                                  detail::grad_buf(n, 1).data.data(), N, K, M);
    });
}

inline Var transpose(const Var& a) {
    detail::require_matrix(a->value, "transpose");
    const int R = a->value.rows(), C = a->value.cols();
    Tensor out = Tensor::matrix(C, R);
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j) out.m(j, i) = a->value.m(i, j);
    return make_node(std::move(out), "transpose", {a}, [](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        Tensor& g = detail::grad_buf(n, 0);
        const int R = g.rows(), C = g.cols();
        for (int i = 0; i < R; ++i)
            for (int j = 0; j < C; ++j) g.m(i, j) += n.grad.m(j, i);
    });
}

// ---------------------------------------------------------------------------
// Spatial padding / cropping / windowing
// ---------------------------------------------------------------------------

// Pads the bottom/right spatial borders to (oh, ow) by mirror reflection.
inline Var reflect_pad_hw(const Var& a, int oh, int ow) {
    const Shape4 s = a->value.shape;
    if (oh < s.h || ow < s.w) throw DimensionError("reflect_pad_hw: target smaller than input");
    Tensor out(Shape4(s.n, s.c, oh, ow));
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < oh; ++y) {
                const int sy = reflect_index(y, s.h);
                for (int x = 0; x < ow; ++x)
                    out.at(n, c, y, x) = a->value.at(n, c, sy, reflect_index(x, s.w));
            }
    return make_node(std::move(out), "reflect_pad_hw", {a}, [](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        Tensor& g = detail::grad_buf(n, 0);
        const Shape4 s = g.shape;
        const Shape4 os = n.value.shape;
        for (int b = 0; b < s.n; ++b)
            for (int c = 0; c < s.c; ++c)
                for (int y = 0; y < os.h; ++y) {
                    const int sy = reflect_index(y, s.h);
                    for (int x = 0; x < os.w; ++x)
                        g.at(b, c, sy, reflect_index(x, s.w)) += n.grad.at(b, c, y, x);
                }
    });
}

// Pads all four spatial borders by `pad` pixels via mirror reflection.
inline Var mirror_pad_hw(const Var& a, int pad) {
    if (pad < 0) throw ConfigError("mirror_pad_hw: pad must be >= 0");
    const Shape4 s = a->value.shape;
    Tensor out(Shape4(s.n, s.c, s.h + 2 * pad, s.w + 2 * pad));
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h + 2 * pad; ++y) {
                const int sy = reflect_index(y - pad, s.h);
                for (int x = 0; x < s.w + 2 * pad; ++x)
                    out.at(n, c, y, x) = a->value.at(n, c, sy, reflect_index(x - pad, s.w));
            }
    return make_node(std::move(out), "mirror_pad_hw", {a}, [pad](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        Tensor& g = detail::grad_buf(n, 0);
        const Shape4 s = g.shape;
        const Shape4 os = n.value.shape;
        for (int b = 0; b < s.n; ++b)
            for (int c = 0; c < s.c; ++c)
                for (int y = 0; y < os.h; ++y) {
                    const int sy = reflect_index(y - pad, s.h);
                    for (int x = 0; x < os.w; ++x)
                        g.at(b, c, sy, reflect_index(x - pad, s.w)) += n.grad.at(b, c, y, x);
                }
    });
}

// Keeps the top-left (h, w) spatial region.
inline Var crop_hw(const Var& a, int h, int w) {
    const Shape4 s = a->value.shape;
    if (h > s.h || w > s.w || h < 1 || w < 1) throw DimensionError("crop_hw: invalid target size");
    Tensor out(Shape4(s.n, s.c, h, w));
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) out.at(n, c, y, x) = a->value.at(n, c, y, x);
    return make_node(std::move(out), "crop_hw", {a}, [](Node& n) {
        if (!detail::wants_grad(n, 0)) return;
        Tensor& g = detail::grad_buf(n, 0);
        const Shape4 os = n.value.shape;
        for (int b = 0; b < os.n; ++b)
            for (int c = 0; c < os.c; ++c)
                for (int y = 0; y < os.h; ++y)
                    for (int x = 0; x < os.w; ++x) g.at(b, c, y, x) += n.grad.at(b, c, y, x);
    });
}

// One p*p window of batch element n as a node-feature matrix: row i is pixel
// (y0 + i/p, x0 + i%p) in row-major order, columns are channels.
inline Var extract_window(const Var& a, int n, int y0, int x0, int p) {
    const Shape4 s = a->value.shape;
    if (n < 0 || n >= s.n || y0 < 0 || x0 < 0 || y0 + p > s.h || x0 + p > s.w || p < 1)
        throw DimensionError("extract_window: window outside tensor " + s.str());
    Tensor out = Tensor::matrix(p * p, s.c);
    for (int i = 0; i < p * p; ++i)
        for (int c = 0; c < s.c; ++c)
            out.m(i, c) = a->value.at(n, c, y0 + i / p, x0 + i % p);
    return make_node(std::move(out), "extract_window", {a}, [n, y0, x0, p](Node& nd) {
        if (!detail::wants_grad(nd, 0)) return;
        Tensor& g = detail::grad_buf(nd, 0);
        const int C = g.shape.c;
        for (int i = 0; i < p * p; ++i)
            for (int c = 0; c < C; ++c)
                g.at(n, c, y0 + i / p, x0 + i % p) += nd.grad.m(i, c);
    });
}

// Reassembles per-window node matrices into a (n, c, h, w) tensor; windows
// are ordered batch-major, then window row, then window column.
inline Var assemble_windows(const std::vector<Var>& windows, Shape4 shape, int p) {
    if (shape.h % p != 0 || shape.w % p != 0)
        throw DimensionError("assemble_windows: spatial axes not divisible by window size");
    const int wy = shape.h / p, wx = shape.w / p;
    if (static_cast<int>(windows.size()) != shape.n * wy * wx)
        throw DimensionError("assemble_windows: window count mismatch");
    Tensor out(shape);
    std::size_t wi = 0;
    for (int n = 0; n < shape.n; ++n)
        for (int gy = 0; gy < wy; ++gy)
            for (int gx = 0; gx < wx; ++gx, ++wi) {
                const Tensor& h = windows[wi]->value;
                if (h.rows() != p * p || h.cols() != shape.c)
                    throw DimensionError("assemble_windows: node matrix shape mismatch");
                for (int i = 0; i < p * p; ++i)
                    for (int c = 0; c < shape.c; ++c)
                        out.at(n, c, gy * p + i / p, gx * p + i % p) = h.m(i, c);
            }
    return make_node(std::move(out), "assemble_windows", {windows.begin(), windows.end()},
                     [p](Node& nd) {
                         const Shape4 s = nd.value.shape;
                         const int wx = s.w / p;
                         for (std::size_t wi = 0; wi < nd.parents.size(); ++wi) {
                             if (!detail::wants_grad(nd, wi)) continue;
                             Tensor& g = detail::grad_buf(nd, wi);
                             const int n = static_cast<int>(wi) / ((s.h / p) * wx);
                             const int rem = static_cast<int>(wi) % ((s.h / p) * wx);
                             const int gy = rem / wx, gx = rem % wx;
                             for (int i = 0; i < p * p; ++i)
                                 for (int c = 0; c < s.c; ++c)
                                     g.m(i, c) += nd.grad.at(n, c, gy * p + i / p, gx * p + i % p);
                         }
                     });
}

// ---------------------------------------------------------------------------
// Bicubic upsampling (integer factor, unclamped)
// ---------------------------------------------------------------------------

inline Var bicubic_upsample(const Var& a, int factor) {
    if (factor < 1) throw ConfigError("bicubic_upsample: factor must be >= 1");
    const Shape4 s = a->value.shape;
    const Shape4 os(s.n, s.c, s.h * factor, s.w * factor);
    Tensor out(os);
    const std::size_t in_plane = static_cast<std::size_t>(s.h) * s.w;
    const std::size_t out_plane = static_cast<std::size_t>(os.h) * os.w;
    std::vector<double> plane(in_plane);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const double* src = &a->value.data[(static_cast<std::size_t>(n) * s.c + c) * in_plane];
            std::copy_n(src, in_plane, plane.begin());
            std::vector<double> up = resample_bicubic_plane(plane, s.h, s.w, os.h, os.w);
            std::copy_n(up.begin(), out_plane,
                        out.data.begin() + (static_cast<std::size_t>(n) * s.c + c) * out_plane);
        }
    return make_node(std::move(out), "bicubic_upsample", {a}, [](Node& nd) {
        if (!detail::wants_grad(nd, 0)) return;
        Tensor& g = detail::grad_buf(nd, 0);
        const Shape4 s = g.shape;
        const Shape4 os = nd.value.shape;
        const std::vector<CubicTap> row_taps = cubic_taps(s.h, os.h);
        const std::vector<CubicTap> col_taps = cubic_taps(s.w, os.w);
        const std::size_t in_plane = static_cast<std::size_t>(s.h) * s.w;
        const std::size_t out_plane = static_cast<std::size_t>(os.h) * os.w;
        std::vector<double> gmid(static_cast<std::size_t>(os.h) * s.w);
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                const double* go = &nd.grad.data[(static_cast<std::size_t>(n) * s.c + c) * out_plane];
                double* gs = &g.data[(static_cast<std::size_t>(n) * s.c + c) * in_plane];
                std::fill(gmid.begin(), gmid.end(), 0.0);
                // adjoint of the horizontal pass
                for (int y = 0; y < os.h; ++y)
                    for (int x = 0; x < os.w; ++x) {
                        const CubicTap& t = col_taps[x];
                        const double gv = go[static_cast<std::size_t>(y) * os.w + x];
                        for (int k = 0; k < 4; ++k)
                            gmid[static_cast<std::size_t>(y) * s.w + t.idx[k]] += t.w[k] * gv;
                    }
                // adjoint of the vertical pass
                for (int y = 0; y < os.h; ++y) {
                    const CubicTap& t = row_taps[y];
                    for (int x = 0; x < s.w; ++x) {
                        const double gv = gmid[static_cast<std::size_t>(y) * s.w + x];
                        for (int k = 0; k < 4; ++k)
                            gs[static_cast<std::size_t>(t.idx[k]) * s.w + x] += t.w[k] * gv;
                    }
                }
            }
    });
}

} // namespace sgsr::ag
