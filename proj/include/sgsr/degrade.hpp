#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "sgsr/error.hpp"
#include "sgsr/image_io.hpp"
#include "sgsr/interp.hpp"
#include "sgsr/rng.hpp"
#include "sgsr/tensor.hpp"

namespace sgsr {

// ---------------------------------------------------------------------------
// Resampling / blur / noise
// ---------------------------------------------------------------------------

// Catmull-Rom resample to (out_h, out_w), clamped to [0,1] at the end. Works
// per (n,c) plane.
inline Tensor bicubic_resample(const Tensor& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ConfigError("bicubic_resample: output dims must be >= 1");
    const Shape4 s = img.shape;
    Tensor out(Shape4(s.n, s.c, out_h, out_w));
    const std::size_t in_plane = static_cast<std::size_t>(s.h) * s.w;
    const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const std::size_t pi = static_cast<std::size_t>(n) * s.c + c;
            std::vector<double> plane(img.data.begin() + pi * in_plane,
                                      img.data.begin() + (pi + 1) * in_plane);
            std::vector<double> res = resample_bicubic_plane(plane, s.h, s.w, out_h, out_w);
            for (std::size_t i = 0; i < out_plane; ++i)
                out.data[pi * out_plane + i] = std::clamp(res[i], 0.0, 1.0);
        }
    return out;
}

// Normalized 1-D Gaussian taps; sum is renormalized to exactly cancel the
// truncation of the tails.
inline std::vector<double> gaussian_taps(int kernel_size, double sigma) {
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw ConfigError("gaussian_taps: kernel size must be odd and positive");
    if (!(sigma > 0.0)) throw ConfigError("gaussian_taps: sigma must be positive");
    std::vector<double> taps(kernel_size);
    const int r = kernel_size / 2;
    double sum = 0.0;
    for (int i = 0; i < kernel_size; ++i) {
        const double d = i - r;
        taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += taps[i];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

// Separable Gaussian blur with mirror (reflect) borders.
inline Tensor gaussian_blur(const Tensor& img, int kernel_size = 7, double sigma = 1.0) {
    const std::vector<double> taps = gaussian_taps(kernel_size, sigma);
    const int r = kernel_size / 2;
    const Shape4 s = img.shape;
    Tensor mid(s), out(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            // vertical
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    double acc = 0.0;
                    for (int k = -r; k <= r; ++k)
                        acc += taps[k + r] * img.at(n, c, reflect_index(y + k, s.h), x);
                    mid.at(n, c, y, x) = acc;
                }
            // horizontal
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    double acc = 0.0;
                    for (int k = -r; k <= r; ++k)
                        acc += taps[k + r] * mid.at(n, c, y, reflect_index(x + k, s.w));
                    out.at(n, c, y, x) = acc;
                }
        }
    return out;
}

// I.i.d. Gaussian noise on the [0,1] intensity scale, then clamp.
inline Tensor add_noise(const Tensor& img, double std_dev, std::uint64_t seed) {
    if (std_dev < 0.0) throw ConfigError("add_noise: std must be >= 0");
    Tensor out = img;
    if (std_dev == 0.0) return out;
    Rng rng(seed, rng_stream::kNoise);
    for (double& v : out.data) v = std::clamp(v + std_dev * rng.normal(), 0.0, 1.0);
    return out;
}

// ---------------------------------------------------------------------------
// Full degradation
// ---------------------------------------------------------------------------

struct DegradeOptions {
    int blur_kernel_size = 7;
    double blur_sigma = 1.0;
    double noise_std = 0.01;
    bool blur_before_downsample = false; // alternative ordering, off by default
};

struct PairMeta {
    int scale = 2;
    int blur_kernel_size = 7;
    double blur_sigma = 1.0;
    double noise_std = 0.01;
    std::uint64_t seed = 0;
};

struct ImagePair {
    Tensor hr;
    Tensor lr;
    PairMeta meta;
};

// downsample -> blur -> noise. The HR side is cropped (top-left) to the
// largest multiple of the scale first so the pair stays aligned.
inline ImagePair degrade(const Tensor& hr_in, int scale, std::uint64_t seed,
                         const DegradeOptions& opts = {}) {
    if (scale < 1) throw ConfigError("degrade: scale must be >= 1");
    const int ch = hr_in.shape.h / scale * scale;
    const int cw = hr_in.shape.w / scale * scale;
    if (ch < 1 || cw < 1) throw ConfigError("degrade: image smaller than scale factor");

    Tensor hr(Shape4(hr_in.shape.n, hr_in.shape.c, ch, cw));
    for (int n = 0; n < hr.shape.n; ++n)
        for (int c = 0; c < hr.shape.c; ++c)
            for (int y = 0; y < ch; ++y)
                for (int x = 0; x < cw; ++x) hr.at(n, c, y, x) = hr_in.at(n, c, y, x);

    Tensor lr;
    if (opts.blur_before_downsample)
        lr = bicubic_resample(gaussian_blur(hr, opts.blur_kernel_size, opts.blur_sigma), ch / scale,
                              cw / scale);
    else
        lr = gaussian_blur(bicubic_resample(hr, ch / scale, cw / scale), opts.blur_kernel_size,
                           opts.blur_sigma);
    lr = add_noise(lr, opts.noise_std, seed);

    ImagePair pair;
    pair.hr = std::move(hr);
    pair.lr = std::move(lr);
    pair.meta = {scale, opts.blur_kernel_size, opts.blur_sigma, opts.noise_std, seed};
    return pair;
}

// ---------------------------------------------------------------------------
// Dataset manifest: one `<hr-path>\t<lr-path>\t<seed>` line per pair
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string hr_path;
    std::string lr_path;
    std::uint64_t seed = 0;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::string split; // "train" or "test"
};

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    for (const ManifestEntry& e : m.entries)
        out << e.hr_path << '\t' << e.lr_path << '\t' << e.seed << '\n';
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    DatasetManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        ManifestEntry e;
        if (!std::getline(ss, e.hr_path, '\t') || !std::getline(ss, e.lr_path, '\t') ||
            !(ss >> e.seed))
            throw FormatError("manifest '" + path.string() + "' line " + std::to_string(lineno) +
                              ": expected <hr-path>\\t<lr-path>\\t<seed>");
        m.entries.push_back(std::move(e));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Procedural textured images for toy-scale experiments
// ---------------------------------------------------------------------------

// Mix of oriented sinusoidal gratings, soft blobs and a slow gradient,
// normalized into [0.02, 0.98]. Deterministic in the seed.
inline Tensor make_textured_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed, rng_stream::kSynth);
    Tensor img(Shape4(1, 1, h, w));

    const double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
    struct Grating {
        double fx, fy, phase, amp;
    };
    std::vector<Grating> gratings;
    for (int k = 0; k < 5; ++k) {
        const double theta = rng.uniform(0.0, std::numbers::pi);
        const double freq = rng.uniform(0.06, 0.45) * std::numbers::pi; // radians per pixel
        gratings.push_back({freq * std::cos(theta), freq * std::sin(theta),
                            rng.uniform(0.0, 2.0 * std::numbers::pi),
                            rng.uniform(0.25, 1.0) / (k + 1)});
    }
    struct Blob {
        double cy, cx, r, amp;
    };
    std::vector<Blob> blobs;
    for (int k = 0; k < 3; ++k)
        blobs.push_back({rng.uniform(0.1, 0.9) * h, rng.uniform(0.1, 0.9) * w,
                         rng.uniform(0.08, 0.25) * std::min(h, w), rng.uniform(-1.0, 1.0)});

    double lo = 1e300, hi = -1e300;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = gx * (static_cast<double>(x) / w) + gy * (static_cast<double>(y) / h);
            for (const Grating& g : gratings) v += g.amp * std::sin(g.fx * x + g.fy * y + g.phase);
            for (const Blob& b : blobs) {
                const double d2 = (y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx);
                v += b.amp * std::exp(-d2 / (2.0 * b.r * b.r));
            }
            img.at(0, 0, y, x) = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    const double span = hi - lo > 1e-9 ? hi - lo : 1.0;
    for (double& v : img.data) v = 0.02 + 0.96 * (v - lo) / span;
    return img;
}

} // namespace sgsr
