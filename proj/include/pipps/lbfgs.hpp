#pragma once

#include "pipps/common.hpp"

#include <functional>

namespace pipps {

/// Objective returning f(x) and writing the gradient into the second argument.
using Objective = std::function<double(const Vector&, Vector&)>;

struct LbfgsOptions {
    int max_iterations = 200;
    int history = 8;
    double gradient_tolerance = 1e-6;
    double relative_tolerance = 1e-10;
};

struct LbfgsResult {
    Vector x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    bool failed = false;  ///< objective was non-finite at the start point
};

/// Limited-memory BFGS with box constraints handled by projection: variables
/// sitting on a bound with the gradient pointing outward are frozen for the
/// step. Backtracking Armijo line search. A non-finite objective inside the
/// line search is treated as a failed trial step.
LbfgsResult minimize_lbfgs_box(const Objective& f, Vector x0, const Vector& lower, const Vector& upper,
                               const LbfgsOptions& options = {});

}  // namespace pipps
