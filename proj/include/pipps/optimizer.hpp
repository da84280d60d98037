#pragma once

#include "pipps/common.hpp"
#include "pipps/gradients.hpp"

namespace pipps {

struct OptimizerConfig {
    double learning_rate = 5e-4;
    double momentum = 0.9;
    double delta = 1e-12;
};

struct OptState {
    Vector m;
    double learning_rate = 5e-4;
    double momentum = 0.9;
    double delta = 1e-12;
    long step = 0;

    static OptState create(Eigen::Index param_count, const OptimizerConfig& cfg = {});
};

struct OptLogRow {
    long step = 0;
    double grad_norm = 0.0;
    double mean_variance = 0.0;
    double momentum_norm = 0.0;
};

/// m <- gamma m + g / sqrt(g^2 + v + delta), theta <- theta - alpha m, per
/// coordinate, with v the variance of the mean. Coordinates where `mask` is 0
/// are left untouched.
OptLogRow sgd_step(OptState& state, Vector& theta, const Vector& grad, const Vector& variance,
                   const Vector* mask = nullptr);
OptLogRow sgd_step(OptState& state, Vector& theta, const GradEstimate& est, const Vector* mask = nullptr);

}  // namespace pipps
