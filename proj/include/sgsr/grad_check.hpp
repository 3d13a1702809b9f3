#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sgsr/autograd.hpp"
#include "sgsr/ops.hpp"
#include "sgsr/rng.hpp"

namespace sgsr {

inline Tensor random_tensor(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(s);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Uniform magnitudes in [gap, 1] with random sign; keeps kinked ops (relu,
// abs) away from their non-differentiable point.
inline Tensor random_tensor_away_from_zero(Shape4 s, Rng& rng, double gap = 0.01) {
    Tensor t(s);
    for (double& v : t.data) v = rng.uniform_sym_away_from_zero(gap);
    return t;
}

// Central-difference check of the reverse-mode gradients.
//
// `build` must construct a scalar graph over exactly the given leaf vars; it
// is re-invoked with perturbed leaf values, so the analytic path and the
// numeric oracle share nothing but the leaves. Returns
// max_i |analytic_i - central_i| / max(1, |central_i|) over every coordinate
// of every leaf.
inline double grad_check(const std::function<ag::Var()>& build,
                         const std::vector<ag::Var>& leaves, double h = 1e-6) {
    for (const ag::Var& l : leaves) ag::zero_grad(l);
    ag::Var out = build();
    ag::assert_all_finite(out);
    if (out->value.size() != 1)
        throw DimensionError("grad_check: function must be scalar-valued, got " +
                             out->value.shape.str());
    ag::backward(out);

    std::vector<Tensor> analytic;
    analytic.reserve(leaves.size());
    for (const ag::Var& l : leaves)
        analytic.push_back(l->grad.empty() ? Tensor(l->value.shape) : l->grad);

    auto eval = [&]() {
        ag::Var y = build();
        if (!std::isfinite(y->value[0])) ag::assert_all_finite(y);
        return y->value[0];
    };

    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Tensor& x = leaves[li]->value;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double keep = x[j];
            x[j] = keep + h;
            const double fp = eval();
            x[j] = keep - h;
            const double fm = eval();
            x[j] = keep;
            const double central = (fp - fm) / (2.0 * h);
            const double err = std::fabs(analytic[li][j] - central) / std::max(1.0, std::fabs(central));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace sgsr
