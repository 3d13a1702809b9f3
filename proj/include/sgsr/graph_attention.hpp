#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "sgsr/ops.hpp"
#include "sgsr/rng.hpp"

namespace sgsr {

inline constexpr double kDegreeEps = 1e-10;

// Per-module state of the windowed graph attention: one trainable
// propagation matrix plus a fixed set of random unit hyperplanes for the
// sign-hash bucketing. Hyperplanes are drawn once and never change.
struct AsgnnParams {
    ag::Var w_g;   // c x c propagation weights
    Tensor planes; // b x c unit normals
    std::uint64_t seed = 0;
};

inline AsgnnParams make_asgnn_params(int channels, int plane_count, Rng& rng,
                                     std::uint64_t seed = 0) {
    AsgnnParams p;
    const double bound = std::sqrt(1.0 / channels);
    Tensor w = Tensor::matrix(channels, channels);
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    p.w_g = ag::leaf(std::move(w));
    p.planes = Tensor::matrix(plane_count, channels);
    for (int k = 0; k < plane_count; ++k) {
        double norm2 = 0.0;
        for (int c = 0; c < channels; ++c) {
            double v = rng.normal();
            p.planes.m(k, c) = v;
            norm2 += v * v;
        }
        double inv = 1.0 / std::sqrt(norm2);
        for (int c = 0; c < channels; ++c) p.planes.m(k, c) *= inv;
    }
    p.seed = seed;
    return p;
}

// ---------------------------------------------------------------------------
// Window partitioning
// ---------------------------------------------------------------------------

// Non-overlapping p*p windows over a feature map. Inputs whose spatial dims
// are not multiples of p are reflect-padded up front and cropped on restore.
struct PatchSet {
    std::vector<ag::Var> windows; // node matrices, batch-major then row-major
    Shape4 padded_shape;
    Shape4 original_shape;
    int p = 0;
};

inline PatchSet patch(const ag::Var& x, int p) {
    if (p < 1) throw ConfigError("patch: window size must be positive");
    const Shape4 s = x->value.shape;
    const int ph = (s.h + p - 1) / p * p;
    const int pw = (s.w + p - 1) / p * p;
    ag::Var xp = (ph != s.h || pw != s.w) ? ag::reflect_pad_hw(x, ph, pw) : x;

    PatchSet ps;
    ps.original_shape = s;
    ps.padded_shape = Shape4(s.n, s.c, ph, pw);
    ps.p = p;
    ps.windows.reserve(static_cast<std::size_t>(s.n) * (ph / p) * (pw / p));
    for (int n = 0; n < s.n; ++n)
        for (int gy = 0; gy < ph / p; ++gy)
            for (int gx = 0; gx < pw / p; ++gx)
                ps.windows.push_back(ag::extract_window(xp, n, gy * p, gx * p, p));
    return ps;
}

inline ag::Var restore(const PatchSet& ps, const std::vector<ag::Var>& windows) {
    ag::Var out = ag::assemble_windows(windows, ps.padded_shape, ps.p);
    if (ps.padded_shape.h != ps.original_shape.h || ps.padded_shape.w != ps.original_shape.w)
        out = ag::crop_hw(out, ps.original_shape.h, ps.original_shape.w);
    return out;
}

inline ag::Var restore(const PatchSet& ps) { return restore(ps, ps.windows); }

// ---------------------------------------------------------------------------
// Similarity graph
// ---------------------------------------------------------------------------

struct SimilarityGraph {
    ag::Var s;      // N x N dot-product similarity, zero diagonal
    ag::Var degree; // N x 1 row sums of |S|
    ag::Var s_norm; // D^{-1/2} S D^{-1/2}, rows/cols with tiny degree zeroed
};

inline SimilarityGraph build_similarity(const ag::Var& h) {
    ag::detail::require_matrix(h->value, "build_similarity");
    const int n = h->value.rows();

    Tensor offdiag = Tensor::matrix(n, n, 1.0);
    for (int i = 0; i < n; ++i) offdiag.m(i, i) = 0.0;

    SimilarityGraph g;
    g.s = ag::mul(ag::matmul(h, ag::transpose(h)), ag::constant(std::move(offdiag)));
    // Degrees use |S|: raw dot products can be negative and the symmetric
    // normalization needs non-negative mass.
    g.degree = ag::matmul(ag::abs(g.s), ag::constant(Tensor::matrix(n, 1, 1.0)));
    ag::Var r = ag::rsqrt_or_zero(g.degree, kDegreeEps);
    g.s_norm = ag::mul(g.s, ag::matmul(r, ag::transpose(r)));
    return g;
}

// ---------------------------------------------------------------------------
// Sign-hash bucketing and node sparsification (forward values only; the
// selection is frozen during backward)
// ---------------------------------------------------------------------------

// b-bit sign pattern of each node against the hyperplanes. Row norms do not
// change the signs, so rows are used unnormalized; all-zero rows go to a
// reserved bucket outside the 2^b sign range.
inline std::vector<std::uint32_t> lsh_bucket(const Tensor& h, const Tensor& planes) {
    ag::detail::require_matrix(h, "lsh_bucket");
    ag::detail::require_matrix(planes, "lsh_bucket");
    if (h.cols() != planes.cols())
        throw DimensionError("lsh_bucket: feature axis mismatch, " + std::to_string(h.cols()) +
                             " vs " + std::to_string(planes.cols()));
    const int n = h.rows(), c = h.cols(), b = planes.rows();
    std::vector<std::uint32_t> codes(n, 0);
    for (int i = 0; i < n; ++i) {
        double norm2 = 0.0;
        for (int j = 0; j < c; ++j) norm2 += h.m(i, j) * h.m(i, j);
        if (norm2 < 1e-24) {
            codes[i] = 1u << b;
            continue;
        }
        std::uint32_t code = 0;
        for (int k = 0; k < b; ++k) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += h.m(i, j) * planes.m(k, j);
            if (dot >= 0.0) code |= 1u << k;
        }
        codes[i] = code;
    }
    return codes;
}

inline int active_node_count(double alpha, int n) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in (0, 1]");
    int k = static_cast<int>(std::ceil(alpha * n - 1e-9));
    return std::clamp(k, 1, n);
}

// Nodes ranked by (bucket population desc, node index asc); the top
// ceil(alpha*N) stay active.
inline std::vector<char> active_mask(const std::vector<std::uint32_t>& buckets, double alpha) {
    const int n = static_cast<int>(buckets.size());
    const int keep = active_node_count(alpha, n);
    std::vector<int> pop_of(n);
    {
        std::vector<std::pair<std::uint32_t, int>> pops; // (bucket, count)
        for (std::uint32_t b : buckets) {
            auto it = std::find_if(pops.begin(), pops.end(),
                                   [b](const auto& e) { return e.first == b; });
            if (it == pops.end())
                pops.emplace_back(b, 1);
            else
                ++it->second;
        }
        for (int i = 0; i < n; ++i)
            pop_of[i] = std::find_if(pops.begin(), pops.end(),
                                     [&](const auto& e) { return e.first == buckets[i]; })
                            ->second;
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return pop_of[a] > pop_of[b]; });
    std::vector<char> mask(n, 0);
    for (int i = 0; i < keep; ++i) mask[order[i]] = 1;
    return mask;
}

struct SparsifyResult {
    std::vector<char> active;
    ag::Var adjacency; // s_norm with rows/cols of inactive nodes cropped to 0
};

inline SparsifyResult sparsify(const ag::Var& s_norm, const std::vector<std::uint32_t>& buckets,
                               double alpha) {
    const int n = s_norm->value.rows();
    if (static_cast<int>(buckets.size()) != n)
        throw DimensionError("sparsify: bucket count does not match node count");
    SparsifyResult r;
    r.active = active_mask(buckets, alpha);
    Tensor mask = Tensor::matrix(n, n);
    for (int i = 0; i < n; ++i)
        if (r.active[i])
            for (int j = 0; j < n; ++j)
                if (r.active[j]) mask.m(i, j) = 1.0;
    r.adjacency = ag::mul(s_norm, ag::constant(std::move(mask)));
    return r;
}

// One graph-convolution step with residual: H' = relu(A H W) + H. Isolated
// nodes (zero adjacency rows) pass through unchanged.
inline ag::Var propagate(const ag::Var& h, const ag::Var& adjacency, const ag::Var& w_g) {
    return ag::add(ag::relu(ag::matmul(ag::matmul(adjacency, h), w_g)), h);
}

// ---------------------------------------------------------------------------
// Full pass: patch -> similarity -> hash -> sparsify -> propagate -> restore
// ---------------------------------------------------------------------------

inline ag::Var asgnn_forward(const ag::Var& x, const AsgnnParams& params, int p, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in (0, 1]");
    PatchSet ps = patch(x, p);
    std::vector<ag::Var> outs;
    outs.reserve(ps.windows.size());
    for (const ag::Var& h : ps.windows) {
        SimilarityGraph g = build_similarity(h);
        SparsifyResult sp = sparsify(g.s_norm, lsh_bucket(h->value, params.planes), alpha);
        outs.push_back(propagate(h, sp.adjacency, params.w_g));
    }
    return restore(ps, outs);
}

// Dense route: no bucketing, no cropping; the adjacency is the full
// normalized similarity. Reference path for the sparse implementation.
inline ag::Var asgnn_forward_dense(const ag::Var& x, const AsgnnParams& params, int p) {
    PatchSet ps = patch(x, p);
    std::vector<ag::Var> outs;
    outs.reserve(ps.windows.size());
    for (const ag::Var& h : ps.windows)
        outs.push_back(propagate(h, build_similarity(h).s_norm, params.w_g));
    return restore(ps, outs);
}

} // namespace sgsr
