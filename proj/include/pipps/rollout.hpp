#pragma once

#include "pipps/common.hpp"
#include "pipps/dynamics.hpp"
#include "pipps/environment.hpp"
#include "pipps/policy.hpp"
#include "pipps/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pipps {

enum class RolloutMode {
    plain,                         ///< fresh draws for every call
    fixed_seed,                    ///< draws depend only on the seed
    gaussian_resample,             ///< refit-and-resample each step, fresh draws
    gaussian_resample_fixed_seed,  ///< refit-and-resample, fixed draws
};

std::string to_string(RolloutMode m);
RolloutMode rollout_mode_from_string(const std::string& s);
bool uses_resampling(RolloutMode m);
bool uses_fixed_seed(RolloutMode m);

struct RolloutConfig {
    Eigen::Index particles = 300;
    Eigen::Index horizon = 30;
    RolloutMode mode = RolloutMode::plain;
    bool drop_model_uncertainty = false;  ///< ignore sigma_f, sample with sigma_n only
    double noise_variance_multiplier = 1.0;
    std::uint64_t seed = 0;
    int workers = 1;
    bool record_jacobians = true;
};

/// Per-particle local derivatives of one transition t -> t+1.
struct StepJacobians {
    Matrix zeta_dx;     ///< d(mean, std)/dx_t, total through the policy: 2D x D
    Matrix zeta_du;     ///< d(mean, std)/du_t: 2D x F
    Matrix du_dtheta;   ///< F x |theta|
};

/// Full record of a particle rollout; enough to replay any backward pass.
///
/// Indexing: states[t] for t = 0..T. Transition quantities for the step
/// t -> t+1 live at index t: actions[t], mean[t], std[t], eps[t] (which
/// produce states[t + 1]) and jacobians[t][i]. In resampling mode the
/// policy and model read inputs[t], the refit-and-resampled version of
/// states[t]; costs are always evaluated on states[t].
struct TrajectoryRecord {
    Eigen::Index particles = 0;
    Eigen::Index horizon = 0;
    Eigen::Index state_dim = 0;
    Eigen::Index action_dim = 0;
    Eigen::Index param_count = 0;
    RolloutMode mode = RolloutMode::plain;
    std::uint64_t seed = 0;  ///< the seed draws were taken from

    std::vector<Matrix> states;   ///< T+1 of D x P
    std::vector<Matrix> inputs;   ///< T of D x P (== states[t] unless resampling)
    std::vector<Matrix> actions;  ///< T of F x P
    std::vector<Matrix> mean;     ///< T of D x P
    std::vector<Matrix> std;      ///< T of D x P
    std::vector<Matrix> eps;      ///< T of D x P
    Matrix costs;                 ///< (T+1) x P
    std::vector<Matrix> cost_grads;  ///< T+1 of D x P
    std::vector<std::vector<StepJacobians>> jacobians;  ///< T x P

    // Resampling quantities, index t for the resampling of states[t] (t >= 1).
    std::vector<Vector> batch_mean;
    std::vector<Matrix> batch_cov;
    std::vector<Matrix> batch_chol;
    std::vector<Matrix> resample_draws;  ///< z, D x P

    /// First step at which a particle's state became non-finite, or horizon + 1.
    std::vector<Eigen::Index> truncated_at;
    Flags flags;

    /// G_i = sum_t c_{i,t}.
    Vector returns() const;
    /// G_{i,t} = sum_{s >= t} c_{i,s}, (T+2) x P with a zero last row.
    Matrix returns_to_go() const;
    double mean_return() const;
    double return_standard_error() const;

    /// Tape dump columns: t, i, x..., u..., mu..., sigma..., eps..., cost.
    void write_csv(std::ostream& os) const;
};

/// The seed a rollout draws from: cfg.seed itself in fixed-seed modes,
/// otherwise a value derived from (cfg.seed, iteration).
std::uint64_t rollout_seed(const RolloutConfig& cfg, std::uint64_t iteration);

/// One predict-sample step for the whole batch. Writes actions, distribution
/// parameters, noise draws and next states.
struct PropagateResult {
    Matrix actions;
    Matrix mean;
    Matrix std;
    Matrix eps;
    Matrix next;
    std::vector<StepJacobians> jacobians;
    Flags flags;
};

PropagateResult propagate_step(const TransitionModel& model, const Controller& policy, const Vector& theta,
                               const Matrix& states, const CounterRng& rng, std::uint32_t step, bool with_grads,
                               int workers = 1);

/// Refit a Gaussian to the batch and redraw every particle from it:
/// x'_i = mean + L z_i with L the Cholesky factor of the 1/(P-1) sample
/// covariance.
struct ResampleResult {
    Matrix states;
    Vector mean;
    Matrix cov;
    Matrix chol;
    Matrix draws;
    Flags flags;
};

ResampleResult gr_resample(const Matrix& states, const CounterRng& rng, std::uint32_t step);
/// Test hook: resample with caller-provided draws.
ResampleResult gr_resample_with_draws(const Matrix& states, const Matrix& draws);

TrajectoryRecord rollout_batch(const TransitionModel& model, const Controller& policy, const CostFunction& cost,
                               const Vector& theta, const RolloutConfig& cfg, const InitialStateDist& init,
                               std::uint64_t iteration = 0);

/// Convenience overload building the GP transition with the config's ablations.
TrajectoryRecord rollout_batch(const GpModel& model, const Controller& policy, const CostFunction& cost,
                               const Vector& theta, const RolloutConfig& cfg, const InitialStateDist& init,
                               std::uint64_t iteration = 0);

}  // namespace pipps
