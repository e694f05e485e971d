#pragma once

#include "hemi/autodiff.hpp"

#include <span>
#include <vector>

namespace hemi {

struct adam_config {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment accumulators for one parameter list. Bound to the parameter
/// shapes on the first step.
struct adam_state {
    adam_config config;
    std::size_t t = 0;
    std::vector<tensor> m;
    std::vector<tensor> v;
};

/// Bias-corrected Adam update using each parameter's current grad.
/// Parameters without a grad buffer are treated as having zero gradient.
void adam_step(adam_state& state, std::span<var> params);

/// Scales all grads so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<var> params, double max_norm);

}  // namespace hemi
