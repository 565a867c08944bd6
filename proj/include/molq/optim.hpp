#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "molq/tensor.hpp"

namespace molq {

/// Learning-rate schedule: lr0 halved every `half_every` epochs. The halving
/// is an exact exponent shift so logged rates reproduce bit-for-bit.
inline double lr_at(double lr0, int epoch, int half_every = 10) {
    return std::ldexp(lr0, -(epoch / half_every));
}

/// Flat gradient buffers aligned with a parameter list.
using GradVecs = std::vector<std::vector<double>>;

inline GradVecs zero_grads(const std::vector<std::pair<std::string, TensorPtr>>& params) {
    GradVecs g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        g[i].assign(params[i].second->value.size(), 0.0);
    return g;
}

/// Scales all gradients by max_norm/norm when the global L2 norm exceeds
/// max_norm; returns the pre-clip norm.
inline double clip_global_norm(GradVecs& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (double v : g) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto& g : grads)
            for (double& v : g) v *= s;
    }
    return norm;
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    GradVecs m;
    GradVecs v;
    long step = 0;

    static AdamState init(const std::vector<std::pair<std::string, TensorPtr>>& params) {
        AdamState s;
        s.m = zero_grads(params);
        s.v = zero_grads(params);
        return s;
    }
};

/// Bias-corrected Adam update in place.
inline void adam_step(std::vector<std::pair<std::string, TensorPtr>>& params, const GradVecs& grads,
                      AdamState& state, double lr, const AdamConfig& cfg = {}) {
    if (grads.size() != params.size() || state.m.size() != params.size())
        throw ShapeError("adam_step: parameter/gradient/state count mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].second->value;
        const auto& g = grads[i];
        if (g.size() != p.size())
            throw ShapeError("adam_step: gradient size mismatch for " + params[i].first);
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

}  // namespace molq
