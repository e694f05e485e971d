#include "hemi/adam.hpp"

#include "hemi/error.hpp"

#include <cmath>

namespace hemi {

void adam_step(adam_state& state, std::span<var> params) {
    if (state.m.empty()) {
        for (const var& p : params) {
            state.m.emplace_back(p.shape(), 0.0);
            state.v.emplace_back(p.shape(), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw numeric_error("adam state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                            std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (state.m[k].shape() != params[k].shape()) {
            throw numeric_error("adam moment shape " + shape_string(state.m[k].shape()) + " vs parameter shape " +
                                shape_string(params[k].shape()));
        }
        const tensor& g = params[k].grad();
        if (!g.empty() && g.shape() != params[k].shape()) {
            throw numeric_error("gradient shape " + shape_string(g.shape()) + " vs parameter shape " +
                                shape_string(params[k].shape()));
        }
    }

    ++state.t;
    const auto& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const tensor& g = params[k].grad();
        auto value = params[k].value().values();
        auto m = state.m[k].values();
        auto v = state.v[k].values();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double gi = g.empty() ? 0.0 : g[i];
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            value[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

double clip_grad_norm(std::span<var> params, double max_norm) {
    double sq = 0.0;
    for (const var& p : params)
        for (double g : p.grad().values()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (var& p : params)
            for (double& g : p.grad().values()) g *= f;
    }
    return norm;
}

}  // namespace hemi
