#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sgsr/blocks.hpp"
#include "sgsr/grad_check.hpp"
#include "support/reference.hpp"

using namespace sgsr;
using Catch::Approx;

namespace {

void zero_layer(ConvLayer& l) {
    for (double& v : l.weight->value.data) v = 0.0;
    if (l.bias)
        for (double& v : l.bias->value.data) v = 0.0;
}

void zero_mco(McoParams& p) {
    zero_layer(p.adjust_1x1);
    zero_layer(p.branch_3x3);
    zero_layer(p.branch_5x5);
    zero_layer(p.fuse_3x3);
}

void zero_msc(MscParams& p) {
    zero_layer(p.dconv);
    zero_layer(p.fuse);
}

// identity depthwise 3x3 (center tap 1)
void identity_dconv(MscParams& p, int c) {
    for (double& v : p.dconv.weight->value.data) v = 0.0;
    for (int ch = 0; ch < c; ++ch) p.dconv.weight->value.at(ch, 0, 1, 1) = 1.0;
    for (double& v : p.dconv.bias->value.data) v = 0.0;
}

Tensor relu_t(Tensor t) {
    for (double& v : t.data) v = v > 0 ? v : 0.0;
    return t;
}

// Naive MCO forward mirroring the block formula with reference convs only.
Tensor mco_reference(const Tensor& x, const McoParams& p, const FixedKernelBank& bank) {
    const int c = x.shape.c;
    Tensor a = ref::conv2d(x, p.adjust_1x1.weight->value, &p.adjust_1x1.bias->value, 1, 0, 1);
    Tensor b3 = ref::conv2d(a, p.branch_3x3.weight->value, &p.branch_3x3.bias->value, 1, 1, 1);
    Tensor b5 = ref::conv2d(a, p.branch_5x5.weight->value, &p.branch_5x5.bias->value, 1, 2, 1);
    (void)c;
    Tensor lap = ref::fixed_kernel_response(a, bank.laplacian);
    Tensor rx = ref::fixed_kernel_response(a, bank.gx);
    Tensor ry = ref::fixed_kernel_response(a, bank.gy);
    Tensor rtl = ref::fixed_kernel_response(a, bank.g_tl);
    Tensor rtr = ref::fixed_kernel_response(a, bank.g_tr);
    Tensor s(a.shape);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double edge =
            std::sqrt(rx[i] * rx[i] + ry[i] * ry[i] + rtl[i] * rtl[i] + rtr[i] * rtr[i] + 1e-12);
        s[i] = b3[i] + b5[i] + lap[i] + edge;
    }
    Tensor fused = ref::conv2d(relu_t(s), p.fuse_3x3.weight->value, &p.fuse_3x3.bias->value, 1, 1, 1);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += fused[i];
    return out;
}

// Naive MSC forward: depthwise conv, 4-way split, chained spatial-softmax
// gating, concat, fuse, residual.
Tensor msc_reference(const Tensor& x, const MscParams& p) {
    const int c = x.shape.c, q = c / 4;
    Tensor d = ref::conv2d(x, p.dconv.weight->value, &p.dconv.bias->value, 1, 1, c);
    auto slice = [&](int c0, int c1) {
        Tensor out(Shape4(d.shape.n, c1 - c0, d.shape.h, d.shape.w));
        for (int n = 0; n < d.shape.n; ++n)
            for (int ch = c0; ch < c1; ++ch)
                for (int y = 0; y < d.shape.h; ++y)
                    for (int xx = 0; xx < d.shape.w; ++xx)
                        out.at(n, ch - c0, y, xx) = d.at(n, ch, y, xx);
        return out;
    };
    Tensor g0 = slice(0, q), g1 = slice(q, 2 * q), g2 = slice(2 * q, 3 * q), g3 = slice(3 * q, 4 * q);
    auto gate = [&](const Tensor& v, const Tensor& prev) {
        Tensor sm = ref::softmax_spatial(prev);
        Tensor out = v;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= sm[i];
        return out;
    };
    Tensor g1p = gate(g1, g0);
    Tensor g2p = gate(g2, g1p);
    Tensor g3p = gate(g3, g2p);
    Tensor cat(Shape4(x.shape.n, c, x.shape.h, x.shape.w));
    const Tensor* parts[] = {&g0, &g1p, &g2p, &g3p};
    for (int n = 0; n < x.shape.n; ++n)
        for (int pi = 0; pi < 4; ++pi)
            for (int ch = 0; ch < q; ++ch)
                for (int y = 0; y < x.shape.h; ++y)
                    for (int xx = 0; xx < x.shape.w; ++xx)
                        cat.at(n, pi * q + ch, y, xx) = parts[pi]->at(n, ch, y, xx);
    Tensor fused = ref::conv2d(cat, p.fuse.weight->value, &p.fuse.bias->value, 1, 1, 1);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += fused[i];
    return out;
}

} // namespace

TEST_CASE("mco: zero weights reduce the block to the identity") {
    Rng rng(71, rng_stream::kTest);
    McoParams p = make_mco_params(4, rng);
    zero_mco(p);
    FixedKernelBank bank;
    Tensor xv = random_tensor(Shape4(1, 4, 5, 5), rng);
    Tensor out = mco_forward(ag::constant(xv), p, bank)->value;
    CHECK(ref::max_abs_diff(out, xv) == 0.0);
}

TEST_CASE("mco: shape preserved and channel mismatch rejected") {
    Rng rng(73, rng_stream::kTest);
    McoParams p = make_mco_params(8, rng);
    FixedKernelBank bank;
    ag::Var x = ag::constant(random_tensor(Shape4(1, 8, 6, 6), rng));
    CHECK(mco_forward(x, p, bank)->value.shape == Shape4(1, 8, 6, 6));
    ag::Var bad = ag::constant(random_tensor(Shape4(1, 4, 6, 6), rng));
    CHECK_THROWS_AS(mco_forward(bad, p, bank), ConfigError);
}

TEST_CASE("mco: seeded random forward matches the naive reference within 1e-12") {
    Rng rng(79, rng_stream::kTest);
    FixedKernelBank bank;
    for (int trial = 0; trial < 3; ++trial) {
        McoParams p = make_mco_params(4, rng);
        Tensor xv = random_tensor(Shape4(2, 4, 6, 5), rng);
        Tensor got = mco_forward(ag::constant(xv), p, bank)->value;
        Tensor expect = mco_reference(xv, p, bank);
        CHECK(ref::max_abs_diff(got, expect) < 1e-12);
    }
}

TEST_CASE("msc: shape preserved, divisibility enforced") {
    Rng rng(83, rng_stream::kTest);
    MscParams p = make_msc_params(8, rng);
    ag::Var x = ag::constant(random_tensor(Shape4(1, 8, 4, 4), rng));
    CHECK(msc_forward(x, p)->value.shape == Shape4(1, 8, 4, 4));
    MscParams p6 = make_msc_params(8, rng);
    ag::Var bad = ag::constant(random_tensor(Shape4(1, 6, 4, 4), rng));
    CHECK_THROWS_AS(msc_forward(bad, p6), ConfigError);
}

TEST_CASE("msc: constant input with identity dconv gives k/4 cascade values") {
    Rng rng(89, rng_stream::kTest);
    MscParams p = make_msc_params(4, rng);
    identity_dconv(p, 4);
    const double k = 1.75;
    ag::Var x = ag::constant(Tensor::full(Shape4(1, 4, 2, 2), k));
    MscStages st = msc_forward_stages(x, p);
    for (int g = 1; g <= 3; ++g)
        for (double v : st.groups[g]->value.data) CHECK(v == Approx(k / 4.0).margin(1e-12));
}

TEST_CASE("msc: every softmax attention map sums to 1 per channel within 1e-12") {
    Rng rng(97, rng_stream::kTest);
    MscParams p = make_msc_params(8, rng);
    ag::Var x = ag::constant(random_tensor(Shape4(2, 8, 4, 4), rng));
    MscStages st = msc_forward_stages(x, p);
    for (int g = 0; g < 3; ++g) {
        Tensor sm = ag::softmax(st.groups[g], ag::SoftmaxAxis::spatial)->value;
        const int plane = sm.shape.h * sm.shape.w;
        for (int n = 0; n < sm.shape.n; ++n)
            for (int c = 0; c < sm.shape.c; ++c) {
                double s = 0.0;
                for (int i = 0; i < plane; ++i)
                    s += sm.data[(static_cast<std::size_t>(n) * sm.shape.c + c) * plane + i];
                CHECK(std::fabs(s - 1.0) < 1e-12);
            }
    }
}

TEST_CASE("msc: seeded random forward matches the naive reference within 1e-12") {
    Rng rng(101, rng_stream::kTest);
    for (int trial = 0; trial < 3; ++trial) {
        MscParams p = make_msc_params(8, rng);
        Tensor xv = random_tensor(Shape4(1, 8, 5, 4), rng);
        Tensor got = msc_forward(ag::constant(xv), p)->value;
        Tensor expect = msc_reference(xv, p);
        CHECK(ref::max_abs_diff(got, expect) < 1e-12);
    }
}

TEST_CASE("dfcm: zero-weight blocks make f the identity, so x' = x + f = 2x") {
    Rng rng(103, rng_stream::kTest);
    DfcmParams p;
    p.mco.push_back(make_mco_params(4, rng));
    p.msc.push_back(make_msc_params(4, rng));
    p.asgnn = make_asgnn_params(4, 4, rng);
    zero_mco(p.mco[0]);
    zero_msc(p.msc[0]);
    for (double& v : p.asgnn.w_g->value.data) v = 0.0;
    FixedKernelBank bank;
    Tensor xv = random_tensor(Shape4(1, 4, 4, 4), rng);
    DfcmOut out = dfcm_forward(ag::constant(xv), p, bank, 2, 1.0, true);
    for (std::size_t i = 0; i < xv.size(); ++i) CHECK(out.x_prime->value[i] == 2.0 * xv[i]);
    // zero propagation weights also make the attention path the identity on f
    CHECK(ref::max_abs_diff(out.x_att->value, xv) == 0.0);
}

TEST_CASE("dfcm: output shapes equal input shape") {
    Rng rng(107, rng_stream::kTest);
    DfcmParams p;
    p.mco.push_back(make_mco_params(8, rng));
    p.msc.push_back(make_msc_params(8, rng));
    p.asgnn = make_asgnn_params(8, 4, rng);
    FixedKernelBank bank;
    ag::Var x = ag::constant(random_tensor(Shape4(2, 8, 6, 6), rng));
    DfcmOut out = dfcm_forward(x, p, bank, 2, 0.75, true);
    CHECK(out.x_prime->value.shape == x->value.shape);
    CHECK(out.x_att->value.shape == x->value.shape);
}

TEST_CASE("dfcm: alpha = 1 attention equals the naive dense reference within 1e-12") {
    Rng rng(109, rng_stream::kTest);
    DfcmParams p;
    p.mco.push_back(make_mco_params(4, rng));
    p.msc.push_back(make_msc_params(4, rng));
    p.asgnn = make_asgnn_params(4, 4, rng);
    FixedKernelBank bank;
    ag::Var x = ag::constant(random_tensor(Shape4(1, 4, 4, 4), rng, 0.0, 1.0));

    DfcmOut out = dfcm_forward(x, p, bank, 2, 1.0, true);
    // rebuild f with the same blocks to feed the naive oracle
    ag::Var f = msc_forward(mco_forward(x, p.mco[0], bank), p.msc[0]);
    Tensor expect = ref::asgnn_dense(f->value, p.asgnn.w_g->value, 2);
    CHECK(ref::max_abs_diff(out.x_att->value, expect) < 1e-12);
}

TEST_CASE("fem: shape preservation and zero-weight collapse") {
    Rng rng(113, rng_stream::kTest);
    const int c = 4;
    FemParams fem;
    for (int d = 0; d < 2; ++d) {
        DfcmParams dp;
        dp.mco.push_back(make_mco_params(c, rng));
        dp.msc.push_back(make_msc_params(c, rng));
        dp.asgnn = make_asgnn_params(c, 4, rng);
        fem.dfcms.push_back(std::move(dp));
    }
    fem.fuse_att = make_conv(2 * c, c, 1, 0, 1, rng);
    fem.fuse_main = make_conv(3 * c, c, 1, 0, 1, rng);
    FixedKernelBank bank;
    ag::Var x = ag::constant(random_tensor(Shape4(1, c, 4, 4), rng));
    FemOut out = fem_forward(x, fem, bank, 2, 0.75, true);
    CHECK(out.y->value.shape == x->value.shape);
    CHECK(out.y_att->value.shape == x->value.shape);

    zero_layer(fem.fuse_att);
    zero_layer(fem.fuse_main);
    FemOut zeroed = fem_forward(x, fem, bank, 2, 0.75, true);
    for (double v : zeroed.y->value.data) CHECK(v == 0.0);
    for (double v : zeroed.y_att->value.data) CHECK(v == 0.0);
}

TEST_CASE("fem: gradient check through a 1-DFCM FEM at (1,4,4,4)") {
    Rng rng(127, rng_stream::kTest);
    const int c = 4;
    FemParams fem;
    DfcmParams dp;
    dp.mco.push_back(make_mco_params(c, rng));
    dp.msc.push_back(make_msc_params(c, rng));
    dp.asgnn = make_asgnn_params(c, 4, rng);
    fem.dfcms.push_back(std::move(dp));
    fem.fuse_att = make_conv(c, c, 1, 0, 1, rng);
    fem.fuse_main = make_conv(2 * c, c, 1, 0, 1, rng);
    FixedKernelBank bank;
    ag::Var x = ag::leaf(random_tensor(Shape4(1, c, 4, 4), rng));

    std::vector<ag::Var> leaves{x, fem.dfcms[0].asgnn.w_g, fem.fuse_att.weight, fem.fuse_main.weight};
    for (ConvLayer* l : {&fem.dfcms[0].mco[0].adjust_1x1, &fem.dfcms[0].mco[0].branch_3x3,
                         &fem.dfcms[0].mco[0].branch_5x5, &fem.dfcms[0].mco[0].fuse_3x3,
                         &fem.dfcms[0].msc[0].dconv, &fem.dfcms[0].msc[0].fuse}) {
        leaves.push_back(l->weight);
        leaves.push_back(l->bias);
    }
    double err = grad_check(
        [&] {
            FemOut out = fem_forward(x, fem, bank, 2, 1.0, true);
            return ag::sum(out.y);
        },
        leaves);
    CHECK(err <= 1e-6);
}
