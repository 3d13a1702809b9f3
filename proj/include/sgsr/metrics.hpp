#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sgsr/error.hpp"
#include "sgsr/tensor.hpp"

namespace sgsr {

struct MetricReport {
    double psnr_db = 0.0;
    double ssim = 0.0;
    std::size_t pixels = 0;
    double max_val = 1.0;
};

// 10*log10(max^2 / MSE); +inf when the images are identical.
inline double psnr(const Tensor& a, const Tensor& b, double max_val = 1.0) {
    require_same_shape(a, b, "psnr");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_val * max_val / mse);
}

namespace ssim_detail {

inline constexpr int kWindow = 11;
inline constexpr double kSigma = 1.5;
inline constexpr double kC1 = 0.01 * 0.01; // (0.01 * L)^2, L = 1
inline constexpr double kC2 = 0.03 * 0.03;

inline const std::vector<double>& window_taps() {
    static const std::vector<double> taps = [] {
        std::vector<double> t(kWindow);
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - kWindow / 2;
            t[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            sum += t[i];
        }
        for (double& v : t) v /= sum;
        return t;
    }();
    return taps;
}

// Separable 11-tap filter over the valid region (no padding): output is
// (h-10) x (w-10).
inline std::vector<double> filter_valid(const std::vector<double>& img, int h, int w) {
    const std::vector<double>& taps = window_taps();
    const int oh = h - kWindow + 1, ow = w - kWindow + 1;
    std::vector<double> mid(static_cast<std::size_t>(oh) * w);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += taps[k] * img[static_cast<std::size_t>(y + k) * w + x];
            mid[static_cast<std::size_t>(y) * w + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += taps[k] * mid[static_cast<std::size_t>(y) * w + x + k];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

} // namespace ssim_detail

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01L)^2,
// C2=(0.03L)^2 with L=1, averaged over valid window positions of every
// (n, c) plane.
inline double ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    const Shape4 s = a.shape;
    if (s.h < ssim_detail::kWindow || s.w < ssim_detail::kWindow)
        throw DimensionError("ssim: image " + s.str() + " smaller than the 11x11 window");

    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    double total = 0.0;
    std::size_t windows = 0;
    std::vector<double> xa(plane), xb(plane), xaa(plane), xbb(plane), xab(plane);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                xa[i] = a.data[off + i];
                xb[i] = b.data[off + i];
                xaa[i] = xa[i] * xa[i];
                xbb[i] = xb[i] * xb[i];
                xab[i] = xa[i] * xb[i];
            }
            using ssim_detail::filter_valid;
            const std::vector<double> mu_a = filter_valid(xa, s.h, s.w);
            const std::vector<double> mu_b = filter_valid(xb, s.h, s.w);
            const std::vector<double> raw_aa = filter_valid(xaa, s.h, s.w);
            const std::vector<double> raw_bb = filter_valid(xbb, s.h, s.w);
            const std::vector<double> raw_ab = filter_valid(xab, s.h, s.w);
            for (std::size_t i = 0; i < mu_a.size(); ++i) {
                const double ma = mu_a[i], mb = mu_b[i];
                const double va = raw_aa[i] - ma * ma;
                const double vb = raw_bb[i] - mb * mb;
                const double cov = raw_ab[i] - ma * mb;
                const double num = (2.0 * ma * mb + ssim_detail::kC1) * (2.0 * cov + ssim_detail::kC2);
                const double den =
                    (ma * ma + mb * mb + ssim_detail::kC1) * (va + vb + ssim_detail::kC2);
                total += num / den;
            }
            windows += mu_a.size();
        }
    return total / static_cast<double>(windows);
}

inline MetricReport compare_images(const Tensor& a, const Tensor& b, double max_val = 1.0) {
    MetricReport r;
    r.psnr_db = psnr(a, b, max_val);
    r.ssim = ssim(a, b);
    r.pixels = a.size();
    r.max_val = max_val;
    return r;
}

// Tab-separated `name psnr ssim` line.
inline std::string report_line(const std::string& name, double psnr_db, double ssim_val) {
    char buf[64];
    std::string out = name;
    out += '\t';
    if (std::isinf(psnr_db)) {
        out += "inf";
    } else {
        std::snprintf(buf, sizeof(buf), "%.4f", psnr_db);
        out += buf;
    }
    out += '\t';
    std::snprintf(buf, sizeof(buf), "%.4f", ssim_val);
    out += buf;
    return out;
}

} // namespace sgsr
