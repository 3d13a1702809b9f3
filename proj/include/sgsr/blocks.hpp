#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "sgsr/edge_ops.hpp"
#include "sgsr/graph_attention.hpp"
#include "sgsr/ops.hpp"
#include "sgsr/rng.hpp"

namespace sgsr {

// ---------------------------------------------------------------------------
// Convolution layer with owned parameters
// ---------------------------------------------------------------------------

struct ConvLayer {
    ag::Var weight;
    ag::Var bias; // may be null
    int stride = 1;
    int padding = 0;
    int groups = 1;

    ag::Var operator()(const ag::Var& x) const {
        return ag::conv2d(x, weight, bias, stride, padding, groups);
    }
    int in_channels() const { return weight->value.shape.c * groups; }
    int out_channels() const { return weight->value.shape.n; }
};

// Weights uniform in +-sqrt(1/fan_in), biases zero.
inline ConvLayer make_conv(int in_ch, int out_ch, int k, int padding, int groups, Rng& rng,
                           bool zero_init = false) {
    ConvLayer layer;
    layer.padding = padding;
    layer.groups = groups;
    Tensor w(Shape4(out_ch, in_ch / groups, k, k));
    if (!zero_init) {
        const double bound = std::sqrt(1.0 / (static_cast<double>(in_ch / groups) * k * k));
        for (double& v : w.data) v = rng.uniform(-bound, bound);
    }
    layer.weight = ag::leaf(std::move(w));
    layer.bias = ag::leaf(Tensor(Shape4(1, out_ch, 1, 1)));
    return layer;
}

// ---------------------------------------------------------------------------
// Multi-operator convolution block
// ---------------------------------------------------------------------------

// Parallel 3x3 / 5x5 / Laplacian / edge-magnitude branches over a 1x1-adjusted
// input, summed, passed through relu and a fusing 3x3 conv, plus residual.
struct McoParams {
    ConvLayer adjust_1x1;
    ConvLayer branch_3x3;
    ConvLayer branch_5x5;
    ConvLayer fuse_3x3;

    int channels() const { return adjust_1x1.in_channels(); }
};

inline McoParams make_mco_params(int c, Rng& rng) {
    McoParams p;
    p.adjust_1x1 = make_conv(c, c, 1, 0, 1, rng);
    p.branch_3x3 = make_conv(c, c, 3, 1, 1, rng);
    p.branch_5x5 = make_conv(c, c, 5, 2, 1, rng);
    p.fuse_3x3 = make_conv(c, c, 3, 1, 1, rng);
    return p;
}

inline ag::Var mco_forward(const ag::Var& x, const McoParams& params, const FixedKernelBank& bank) {
    if (x->value.shape.c != params.channels())
        throw ConfigError("mco_forward: input has " + std::to_string(x->value.shape.c) +
                          " channels, block expects " + std::to_string(params.channels()));
    ag::Var a = params.adjust_1x1(x);
    ag::Var branches = ag::add(ag::add(params.branch_3x3(a), params.branch_5x5(a)),
                               ag::add(laplacian_response(a, bank), edge_magnitude(a, bank)));
    return ag::add(x, params.fuse_3x3(ag::relu(branches)));
}

// ---------------------------------------------------------------------------
// Softmax-cascade cross-feature block
// ---------------------------------------------------------------------------

// Depthwise 3x3 over all channels, split into four equal groups; each group
// is gated by the spatial softmax of the previous stage, then everything is
// re-fused by a 3x3 conv with a residual.
struct MscParams {
    ConvLayer dconv; // depthwise 3x3, groups = c
    ConvLayer fuse;  // 3x3, c -> c

    int channels() const { return dconv.in_channels(); }
};

inline MscParams make_msc_params(int c, Rng& rng) {
    MscParams p;
    p.dconv = make_conv(c, c, 3, 1, c, rng);
    p.fuse = make_conv(c, c, 3, 1, 1, rng);
    return p;
}

struct MscStages {
    std::array<ag::Var, 4> groups; // X0, X1', X2', X3'
    ag::Var out;
};

inline MscStages msc_forward_stages(const ag::Var& x, const MscParams& params) {
    const int c = x->value.shape.c;
    if (c % 4 != 0)
        throw ConfigError("msc_forward: channels=" + std::to_string(c) + " not divisible by 4");
    if (c != params.channels())
        throw ConfigError("msc_forward: input has " + std::to_string(c) +
                          " channels, block expects " + std::to_string(params.channels()));
    const int q = c / 4;
    ag::Var d = params.dconv(x);
    ag::Var x0 = ag::slice_channels(d, 0, q);
    ag::Var x1 = ag::slice_channels(d, q, 2 * q);
    ag::Var x2 = ag::slice_channels(d, 2 * q, 3 * q);
    ag::Var x3 = ag::slice_channels(d, 3 * q, 4 * q);
    MscStages st;
    st.groups[0] = x0;
    st.groups[1] = ag::mul(x1, ag::softmax(x0, ag::SoftmaxAxis::spatial));
    st.groups[2] = ag::mul(x2, ag::softmax(st.groups[1], ag::SoftmaxAxis::spatial));
    st.groups[3] = ag::mul(x3, ag::softmax(st.groups[2], ag::SoftmaxAxis::spatial));
    st.out = ag::add(
        params.fuse(ag::concat_channels({st.groups[0], st.groups[1], st.groups[2], st.groups[3]})),
        x);
    return st;
}

inline ag::Var msc_forward(const ag::Var& x, const MscParams& params) {
    return msc_forward_stages(x, params).out;
}

// ---------------------------------------------------------------------------
// Dynamic feature calculation module
// ---------------------------------------------------------------------------

struct DfcmParams {
    std::vector<McoParams> mco;
    std::vector<MscParams> msc;
    AsgnnParams asgnn; // unused when the attention path is disabled
};

struct DfcmOut {
    ag::Var x_prime; // x + MSC(MCO(x))
    ag::Var x_att;   // restored attention features; null when disabled
};

inline DfcmOut dfcm_forward(const ag::Var& x, const DfcmParams& params, const FixedKernelBank& bank,
                            int p, double alpha, bool use_asgnn) {
    ag::Var f = x;
    for (const McoParams& m : params.mco) f = mco_forward(f, m, bank);
    for (const MscParams& m : params.msc) f = msc_forward(f, m);
    DfcmOut out;
    out.x_prime = ag::add(x, f);
    if (use_asgnn) out.x_att = asgnn_forward(f, params.asgnn, p, alpha);
    return out;
}

// ---------------------------------------------------------------------------
// Feature extraction module: a chain of DFCMs plus 1x1 fusions
// ---------------------------------------------------------------------------

struct FemParams {
    std::vector<DfcmParams> dfcms;
    ConvLayer fuse_att;  // 1x1, (dfcm_count)c -> c; only built with attention on
    ConvLayer fuse_main; // 1x1, (dfcm_count + 1)c -> c
};

struct FemOut {
    ag::Var y;
    ag::Var y_att; // null when the attention path is disabled
};

inline FemOut fem_forward(const ag::Var& x, const FemParams& params, const FixedKernelBank& bank,
                          int p, double alpha, bool use_asgnn) {
    std::vector<ag::Var> xs{x};
    std::vector<ag::Var> atts;
    ag::Var cur = x;
    for (const DfcmParams& d : params.dfcms) {
        DfcmOut out = dfcm_forward(cur, d, bank, p, alpha, use_asgnn);
        cur = out.x_prime;
        xs.push_back(cur);
        if (use_asgnn) atts.push_back(out.x_att);
    }
    FemOut out;
    out.y = params.fuse_main(ag::concat_channels(xs));
    if (use_asgnn) {
        out.y_att = params.fuse_att(ag::concat_channels(atts));
        out.y = ag::add(out.y, out.y_att);
    }
    return out;
}

} // namespace sgsr
