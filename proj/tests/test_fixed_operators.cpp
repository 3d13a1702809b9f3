#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sgsr/edge_ops.hpp"
#include "sgsr/grad_check.hpp"
#include "sgsr/rng.hpp"
#include "support/reference.hpp"

using namespace sgsr;
using Catch::Approx;

namespace {

// x-ramp: I(y, x) = x
Tensor make_ramp(int h, int w) {
    Tensor t(Shape4(1, 1, h, w));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) t.at(0, 0, y, x) = static_cast<double>(x);
    return t;
}

// 90-degree counterclockwise rotation of every (n, c) plane
Tensor rot90(const Tensor& t) {
    const Shape4 s = t.shape;
    Tensor out(Shape4(s.n, s.c, s.w, s.h));
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.w; ++y)
                for (int x = 0; x < s.h; ++x) out.at(n, c, y, x) = t.at(n, c, x, s.w - 1 - y);
    return out;
}

} // namespace

TEST_CASE("kernel bank: every kernel sums to zero") {
    FixedKernelBank bank;
    for (const Tensor* k : {&bank.gx, &bank.gy, &bank.g_tl, &bank.g_tr, &bank.laplacian}) {
        double s = 0.0;
        for (double v : k->data) s += v;
        CHECK(s == 0.0);
    }
}

TEST_CASE("kernel bank: directional family closed under 90-degree rotation up to sign") {
    FixedKernelBank bank;
    auto rotk = [](const Tensor& k) {
        Tensor out(k.shape);
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x) out.at(0, 0, y, x) = k.at(0, 0, x, 2 - y);
        return out;
    };
    auto matches_up_to_sign = [&](const Tensor& k, const Tensor& other) {
        bool plus = true, minus = true;
        for (int i = 0; i < 9; ++i) {
            if (k.data[i] != other.data[i]) plus = false;
            if (k.data[i] != -other.data[i]) minus = false;
        }
        return plus || minus;
    };
    const Tensor* family[] = {&bank.gx, &bank.gy, &bank.g_tl, &bank.g_tr};
    for (const Tensor* k : family) {
        Tensor r = rotk(*k);
        bool found = false;
        for (const Tensor* other : family) found = found || matches_up_to_sign(r, *other);
        CHECK(found);
    }
}

TEST_CASE("directional_response: constant image gives exact zeros") {
    FixedKernelBank bank;
    ag::Var x = ag::constant(Tensor::full(Shape4(1, 2, 5, 5), 0.37));
    for (const Tensor* k : {&bank.gx, &bank.gy, &bank.g_tl, &bank.g_tr, &bank.laplacian}) {
        Tensor r = directional_response(x, *k)->value;
        for (double v : r.data) CHECK(v == 0.0);
    }
}

TEST_CASE("directional_response: x-ramp anchors at interior pixels") {
    FixedKernelBank bank;
    ag::Var x = ag::constant(make_ramp(5, 5));
    Tensor rx = directional_response(x, bank.gx)->value;
    Tensor ry = directional_response(x, bank.gy)->value;
    Tensor rtl = directional_response(x, bank.g_tl)->value;
    Tensor rtr = directional_response(x, bank.g_tr)->value;
    for (int y = 1; y < 4; ++y)
        for (int xx = 1; xx < 4; ++xx) {
            CHECK(rx.at(0, 0, y, xx) == -2.0);
            CHECK(ry.at(0, 0, y, xx) == 0.0);
            CHECK(rtl.at(0, 0, y, xx) == -2.0);
            CHECK(rtr.at(0, 0, y, xx) == 2.0);
        }
}

TEST_CASE("edge_magnitude: constant image collapses to sqrt(eps)") {
    FixedKernelBank bank;
    ag::Var x = ag::constant(Tensor::full(Shape4(1, 1, 6, 6), 0.8));
    Tensor g = edge_magnitude(x, bank)->value;
    for (double v : g.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1e-6 + 1e-15);
    }
}

TEST_CASE("edge_magnitude: ramp interior equals sqrt(12)") {
    FixedKernelBank bank;
    ag::Var x = ag::constant(make_ramp(6, 6));
    Tensor g = edge_magnitude(x, bank)->value;
    for (int y = 1; y < 5; ++y)
        for (int xx = 1; xx < 5; ++xx)
            CHECK(g.at(0, 0, y, xx) == Approx(std::sqrt(12.0)).margin(1e-9));
}

TEST_CASE("edge_magnitude: unit impulse map matches the brute-force oracle") {
    FixedKernelBank bank;
    Tensor img(Shape4(1, 1, 5, 5));
    img.at(0, 0, 2, 2) = 1.0;
    Tensor got = edge_magnitude(ag::constant(img), bank)->value;

    Tensor acc(Shape4(1, 1, 5, 5));
    for (const Tensor* k : {&bank.gx, &bank.gy, &bank.g_tl, &bank.g_tr}) {
        Tensor r = ref::fixed_kernel_response(img, *k);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += r[i] * r[i];
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = std::sqrt(acc[i] + 1e-12);
    CHECK(ref::max_abs_diff(got, acc) < 1e-15);
}

TEST_CASE("edge_magnitude: rotation invariance on the interior within 1e-10") {
    FixedKernelBank bank;
    Rng rng(61, rng_stream::kTest);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor img = random_tensor(Shape4(1, 1, 8, 8), rng, 0.0, 1.0);
        Tensor g = edge_magnitude(ag::constant(img), bank)->value;
        Tensor g_of_rot = edge_magnitude(ag::constant(rot90(img)), bank)->value;
        Tensor rot_of_g = rot90(g);
        for (int y = 1; y < 7; ++y)
            for (int x = 1; x < 7; ++x)
                CHECK(std::fabs(g_of_rot.at(0, 0, y, x) - rot_of_g.at(0, 0, y, x)) < 1e-10);
    }
}

TEST_CASE("edge_magnitude: nonnegative everywhere and gradient check passes") {
    FixedKernelBank bank;
    Rng rng(67, rng_stream::kTest);
    Tensor img = random_tensor(Shape4(1, 2, 5, 5), rng);
    Tensor g = edge_magnitude(ag::constant(img), bank)->value;
    for (double v : g.data) CHECK(v >= 0.0);

    ag::Var x = ag::leaf(std::move(img));
    double err = grad_check([&] { return ag::sum(edge_magnitude(x, bank)); }, {x});
    CHECK(err <= 1e-6);
}
