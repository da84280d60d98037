#pragma once

#include "pipps/common.hpp"
#include "pipps/gp_model.hpp"

#include <vector>

namespace pipps {

/// Predicted next-state distributions N(mean, diag(std^2)) for a batch of
/// particles, with the per-particle partial Jacobians (policy not included).
struct TransitionBatch {
    Matrix mean;  ///< D x P
    Matrix std;   ///< D x P
    std::vector<Matrix> dmean_dx;  ///< D x D each
    std::vector<Matrix> dmean_du;  ///< D x F each
    std::vector<Matrix> dstd_dx;
    std::vector<Matrix> dstd_du;
};

/// A learned or analytic Gaussian transition p(x' | x, u).
class TransitionModel {
public:
    virtual ~TransitionModel() = default;
    virtual Eigen::Index state_dim() const = 0;
    virtual Eigen::Index action_dim() const = 0;
    /// states: D x P, actions: F x P. Columns [begin, end) of `out` are written;
    /// `out` must be pre-sized by the caller (see TransitionBatch sizing helper).
    virtual void predict(const Matrix& states, const Matrix& actions, Eigen::Index begin, Eigen::Index end,
                         bool with_grads, TransitionBatch& out, Flags& flags) const = 0;
};

TransitionBatch make_transition_batch(Eigen::Index d, Eigen::Index f, Eigen::Index p, bool with_grads);

/// GP delta model as a transition: mean = x + m(x, u), variance =
/// sigma_f^2 + sigma_n^2 with two ablations. `drop_model_uncertainty` removes
/// sigma_f^2; `noise_multiplier` scales sigma_n^2.
class GpDynamics final : public TransitionModel {
public:
    static constexpr Eigen::Index kBlock = 64;

    GpDynamics(const GpModel& model, Eigen::Index action_dim, bool drop_model_uncertainty = false,
               double noise_multiplier = 1.0);

    Eigen::Index state_dim() const override { return model_.output_dim(); }
    Eigen::Index action_dim() const override { return action_dim_; }

    void predict(const Matrix& states, const Matrix& actions, Eigen::Index begin, Eigen::Index end, bool with_grads,
                 TransitionBatch& out, Flags& flags) const override;

    const GpModel& model() const { return model_; }

private:
    const GpModel& model_;
    Eigen::Index action_dim_;
    bool drop_model_uncertainty_;
    double noise_multiplier_;
};

}  // namespace pipps
