#pragma once

#include <cmath>
#include <vector>

#include "mtmom/errors.hpp"
#include "mtmom/nn/tensor.hpp"

namespace mtmom::nn {

inline double grad_norm(const std::vector<Tensor*>& params) {
    double ss = 0;
    for (const Tensor* p : params)
        for (double g : p->g) ss += g * g;
    return std::sqrt(ss);
}

// Global L2 clipping: if ||g|| > max_norm every gradient is scaled by
// max_norm / ||g||; otherwise untouched.
inline double clip_grad_norm(const std::vector<Tensor*>& params, double max_norm) {
    if (!(max_norm > 0)) raise(Errc::invalid_spec, "clip_grad_norm: max_norm must be > 0");
    double norm = grad_norm(params);
    if (norm > max_norm && norm > 0) {
        double s = max_norm / norm;
        for (Tensor* p : params)
            for (double& g : p->g) g *= s;
    }
    return norm;
}

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> m, v;
    long step = 0;

    void init(const std::vector<Tensor*>& params) {
        m.clear();
        v.clear();
        for (const Tensor* p : params) {
            m.emplace_back(p->numel(), 0.0);
            v.emplace_back(p->numel(), 0.0);
        }
        step = 0;
    }
};

// Bias-corrected Adam. The first step with eps << |g| moves each parameter
// by almost exactly lr * sign(g).
inline void adam_step(const std::vector<Tensor*>& params, AdamState& st, const AdamConfig& cfg) {
    if (st.m.size() != params.size())
        raise(Errc::shape_mismatch, "adam_step: state does not match parameter list");
    ++st.step;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
    for (size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        auto& m = st.m[k];
        auto& v = st.v[k];
        if (m.size() != p.numel())
            raise(Errc::shape_mismatch, "adam_step: parameter shape changed under the optimizer");
        for (size_t i = 0; i < p.numel(); ++i) {
            double g = p.g[i];
            m[i] = b1 * m[i] + (1 - b1) * g;
            v[i] = b2 * v[i] + (1 - b2) * g * g;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace mtmom::nn
