#include "pipps/optimizer.hpp"

#include <cmath>

namespace pipps {

OptState OptState::create(Eigen::Index param_count, const OptimizerConfig& cfg) {
    require(cfg.learning_rate > 0.0, "optimizer: learning rate must be positive");
    require(cfg.momentum >= 0.0 && cfg.momentum < 1.0, "optimizer: momentum must lie in [0, 1)");
    require(cfg.delta >= 0.0, "optimizer: delta must be non-negative");
    OptState s;
    s.m = Vector::Zero(param_count);
    s.learning_rate = cfg.learning_rate;
    s.momentum = cfg.momentum;
    s.delta = cfg.delta;
    return s;
}

OptLogRow sgd_step(OptState& state, Vector& theta, const Vector& grad, const Vector& variance, const Vector* mask) {
    const Eigen::Index n = theta.size();
    require(grad.size() == n && variance.size() == n && state.m.size() == n, "sgd_step: size mismatch");
    require(mask == nullptr || mask->size() == n, "sgd_step: mask size mismatch");
    for (Eigen::Index k = 0; k < n; ++k) {
        if (mask != nullptr && (*mask)[k] == 0.0) {
            continue;
        }
        const double g = grad[k];
        const double z = g * g + variance[k] + state.delta;
        const double inc = z > 0.0 ? g / std::sqrt(z) : 0.0;
        state.m[k] = state.momentum * state.m[k] + inc;
        theta[k] -= state.learning_rate * state.m[k];
    }
    ++state.step;
    OptLogRow row;
    row.step = state.step;
    row.grad_norm = grad.norm();
    row.mean_variance = n > 0 ? variance.mean() : 0.0;
    row.momentum_norm = state.m.norm();
    return row;
}

OptLogRow sgd_step(OptState& state, Vector& theta, const GradEstimate& est, const Vector* mask) {
    return sgd_step(state, theta, est.mean, est.variance, mask);
}

}  // namespace pipps
