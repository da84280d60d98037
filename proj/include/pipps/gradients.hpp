#pragma once

#include "pipps/common.hpp"
#include "pipps/rollout.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pipps {

enum class Estimator { rp, rp_fs, gr, gr_fs, lr, biw_lr, tp };

std::string to_string(Estimator e);
Estimator estimator_from_string(const std::string& s);
/// Rollout mode an estimator's tapes must be produced with.
RolloutMode rollout_mode_for(Estimator e);

/// Per-step record of the total-propagation backward pass.
struct TpStep {
    Eigen::Index step = 0;  ///< t, the state index whose distribution parameters were combined
    double k_lr = 0.0;
    double var_rp = 0.0;  ///< trace of the variance of the mean of the RP theta-terms
    double var_lr = 0.0;
    Vector mean_rp;       ///< (1/P) sum_i dG^RP_{i,t}/dtheta
    Vector mean_lr;
    Vector contribution;  ///< k mean_lr + (1 - k) mean_rp
};

struct GradEstimate {
    Estimator estimator = Estimator::tp;
    Vector mean;      ///< gradient of the expected return w.r.t. theta
    Vector variance;  ///< per-coordinate variance of the mean (sample variance / P)
    /// Per-particle contributions, |theta| x P; their column mean is `mean`.
    Matrix per_particle;
    std::vector<TpStep> steps;  ///< ordered t = T down to 1; TP and pure RP/LR runs
    bool infinite_variance = false;
    Flags flags;

    double trace_variance() const { return variance.sum(); }
    /// Sample variance of the per-particle contributions projected on `direction`.
    double projected_variance(const Vector& direction) const;
    /// k_LR per step in the order t = 1..T.
    std::vector<double> k_lr_trace() const;

    /// Diagnostic dump: step, k_lr, var_rp, var_lr.
    void write_steps_csv(std::ostream& os) const;
};

/// Within-batch likelihood-ratio terms for the transition into states[t].
struct StepLrTerms {
    Eigen::Index step = 0;
    /// log p(x_{j,t} | zeta_{i,t}) with the Gaussian constant included; row i
    /// is the mixture component, column j the sample. Only filled when the
    /// pairwise matrices were requested.
    Matrix log_density;
    /// c_ij = p(x_j | zeta_i) / sum_k p(x_j | zeta_k). Each column sums to 1.
    Matrix weights;
    Vector baselines;  ///< b_{i,t}
    /// dG^LR_{i,t}/dzeta_{i,t} = sum_j c_ij (G_j - b_i) d log p(x_j | zeta_i)/dzeta_i, 2D x P.
    Matrix zeta_grad;
    Flags flags;
};

/// Score of one Gaussian component: d log N(x; mu, diag(sigma^2)) / d(mu, sigma).
Vector gaussian_score(const Vector& x, const Vector& mu, const Vector& sigma);

/// k_LR = 1 / (1 + var_lr / var_rp) with the edge cases resolved: both zero
/// gives 1/2 (flagged), an infinite or NaN var_rp gives 1.
double inverse_variance_weight(double var_lr, double var_rp, Flags* flags = nullptr);

/// `returns_to_go` may be passed to avoid recomputing it per step. With
/// `keep_pairwise` false the P x P matrices are never stored, which is what
/// the estimators use; memory is then linear in P.
StepLrTerms lr_step_terms(const TrajectoryRecord& tape, Eigen::Index t, bool biw,
                          const Matrix* returns_to_go = nullptr, bool keep_pairwise = true);

/// Normalized importance-sampled leave-one-out baseline b_{i,t}.
double baseline_biw(const TrajectoryRecord& tape, Eigen::Index t, Eigen::Index i);

enum class VarianceStrategy {
    sample_trace,       ///< trace of the per-step sample variance (default)
    parameter_subset,   ///< same, restricted to the coordinates in `subset_mask`
    moving_average,     ///< exponential average across calls, kept in `memory`
};

/// Running per-step variance estimates for VarianceStrategy::moving_average.
struct TpVarianceMemory {
    double decay = 0.9;
    std::vector<double> var_rp;
    std::vector<double> var_lr;
};

struct TpOptions {
    bool biw = true;
    VarianceStrategy strategy = VarianceStrategy::sample_trace;
    Vector subset_mask;
    TpVarianceMemory* memory = nullptr;
};

GradEstimate rp_gradient(const TrajectoryRecord& tape);
GradEstimate gr_rp_gradient(const TrajectoryRecord& tape);
GradEstimate lr_gradient(const TrajectoryRecord& tape, bool biw);
GradEstimate total_propagation(const TrajectoryRecord& tape, const TpOptions& options = {});

/// Dispatch on the estimator tag. The tape must come from rollout_mode_for(e).
GradEstimate estimate_gradient(Estimator e, const TrajectoryRecord& tape);

}  // namespace pipps
