#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sgsr/model.hpp"

namespace sgsr {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.99;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double epsilon = 1e-8;
};

// Per-parameter moments; shapes mirror the parameter list passed to init().
struct OptimState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long long t = 0;

    void init(const std::vector<NamedParam>& params) {
        m.clear();
        v.clear();
        for (const NamedParam& p : params) {
            m.emplace_back(p.var->value.shape);
            v.emplace_back(p.var->value.shape);
        }
        t = 0;
    }
};

// Decoupled-weight-decay update:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
// A missing gradient counts as zero. Any non-finite gradient aborts the step
// before any state is touched, naming the parameter.
inline void adamw_step(std::vector<NamedParam>& params, OptimState& st, const AdamWConfig& cfg) {
    if (st.m.size() != params.size())
        throw ConfigError("adamw_step: optimizer state does not match parameter list");
    for (const NamedParam& p : params) {
        if (!p.trainable || p.var->grad.empty()) continue;
        for (double g : p.var->grad.data)
            if (!std::isfinite(g))
                throw NumericError("adamw_step: non-finite gradient in parameter '" + p.name + "'");
    }

    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        Tensor& theta = params[i].var->value;
        const Tensor& grad = params[i].var->grad;
        const bool has_grad = !grad.empty();
        Tensor& m = st.m[i];
        Tensor& v = st.v[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double g = has_grad ? grad[j] : 0.0;
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            theta[j] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) +
                                  cfg.weight_decay * theta[j]);
        }
    }
}

} // namespace sgsr
