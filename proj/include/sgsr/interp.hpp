#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace sgsr {

// Catmull-Rom cubic kernel (a = -0.5).
inline double cubic_weight(double d) {
    d = std::abs(d);
    if (d <= 1.0) return (1.5 * d - 2.5) * d * d + 1.0;
    if (d < 2.0) return ((-0.5 * d + 2.5) * d - 4.0) * d + 2.0;
    return 0.0;
}

// One output sample of a 1-D cubic resample: four source taps and weights.
struct CubicTap {
    std::array<int, 4> idx;
    std::array<double, 4> w;
};

// Tap table for resampling a length-`in` axis to length `out` with half-pixel
// center mapping src = (dst + 0.5) / scale - 0.5 and edge clamping.
inline std::vector<CubicTap> cubic_taps(int in, int out) {
    std::vector<CubicTap> taps(out);
    double scale = static_cast<double>(out) / static_cast<double>(in);
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) / scale - 0.5;
        double base = std::floor(src);
        double t = src - base;
        int b = static_cast<int>(base);
        CubicTap& tap = taps[o];
        for (int k = 0; k < 4; ++k) {
            int i = b - 1 + k;
            tap.idx[k] = std::clamp(i, 0, in - 1);
            tap.w[k] = cubic_weight(src - i);
        }
    }
    return taps;
}

// Separable bicubic resample of one h*w plane (vertical pass, then
// horizontal). Shared by the degradation pipeline and the differentiable
// upsampling op so both produce bit-identical values.
inline std::vector<double> resample_bicubic_plane(const std::vector<double>& src, int h, int w,
                                                  int oh, int ow) {
    std::vector<CubicTap> row_taps = cubic_taps(h, oh);
    std::vector<CubicTap> col_taps = cubic_taps(w, ow);

    std::vector<double> mid(static_cast<std::size_t>(oh) * w, 0.0);
    for (int y = 0; y < oh; ++y) {
        const CubicTap& t = row_taps[y];
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) acc += t.w[k] * src[static_cast<std::size_t>(t.idx[k]) * w + x];
            mid[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }

    std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y) {
        const double* row = &mid[static_cast<std::size_t>(y) * w];
        for (int x = 0; x < ow; ++x) {
            const CubicTap& t = col_taps[x];
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) acc += t.w[k] * row[t.idx[k]];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    return out;
}

// Half-sample symmetric mirror (…1,0 | 0,1,2… | n-1 | n-1,n-2…). With a
// normalized symmetric kernel this boundary preserves total mass exactly,
// which zero or whole-sample reflection would not.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    int period = 2 * n;
    i = ((i % period) + period) % period;
    return i < n ? i : period - 1 - i;
}

} // namespace sgsr
