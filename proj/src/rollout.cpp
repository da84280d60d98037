#include "pipps/rollout.hpp"

#include "pipps/cholesky_grad.hpp"
#include "pipps/parallel.hpp"

#include <cmath>
#include <mutex>
#include <ostream>

namespace pipps {

std::string to_string(RolloutMode m) {
    switch (m) {
        case RolloutMode::plain:
            return "plain";
        case RolloutMode::fixed_seed:
            return "fixed_seed";
        case RolloutMode::gaussian_resample:
            return "gaussian_resample";
        case RolloutMode::gaussian_resample_fixed_seed:
            return "gaussian_resample_fixed_seed";
    }
    return "plain";
}

RolloutMode rollout_mode_from_string(const std::string& s) {
    for (auto m : {RolloutMode::plain, RolloutMode::fixed_seed, RolloutMode::gaussian_resample,
                   RolloutMode::gaussian_resample_fixed_seed}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    throw ContractError("unknown rollout mode '" + s + "'");
}

bool uses_resampling(RolloutMode m) {
    return m == RolloutMode::gaussian_resample || m == RolloutMode::gaussian_resample_fixed_seed;
}

bool uses_fixed_seed(RolloutMode m) {
    return m == RolloutMode::fixed_seed || m == RolloutMode::gaussian_resample_fixed_seed;
}

std::uint64_t rollout_seed(const RolloutConfig& cfg, std::uint64_t iteration) {
    return uses_fixed_seed(cfg.mode) ? cfg.seed : CounterRng(cfg.seed).derive(iteration);
}

Vector TrajectoryRecord::returns() const { return costs.colwise().sum().transpose(); }

Matrix TrajectoryRecord::returns_to_go() const {
    Matrix g = Matrix::Zero(costs.rows() + 1, costs.cols());
    for (Eigen::Index t = costs.rows() - 1; t >= 0; --t) {
        g.row(t) = g.row(t + 1) + costs.row(t);
    }
    return g;
}

double TrajectoryRecord::mean_return() const { return returns().mean(); }

double TrajectoryRecord::return_standard_error() const {
    const Vector g = returns();
    if (g.size() < 2) {
        return 0.0;
    }
    const double var = (g.array() - g.mean()).square().sum() / static_cast<double>(g.size() - 1);
    return std::sqrt(var / static_cast<double>(g.size()));
}

void TrajectoryRecord::write_csv(std::ostream& os) const {
    os << "t,i";
    for (Eigen::Index d = 0; d < state_dim; ++d) os << ",x" << d;
    for (Eigen::Index f = 0; f < action_dim; ++f) os << ",u" << f;
    for (Eigen::Index d = 0; d < state_dim; ++d) os << ",mu" << d;
    for (Eigen::Index d = 0; d < state_dim; ++d) os << ",sigma" << d;
    for (Eigen::Index d = 0; d < state_dim; ++d) os << ",eps" << d;
    os << ",cost\n";
    const auto old_precision = os.precision(17);
    for (Eigen::Index t = 0; t <= horizon; ++t) {
        for (Eigen::Index i = 0; i < particles; ++i) {
            os << t << ',' << i;
            for (Eigen::Index d = 0; d < state_dim; ++d) os << ',' << states[t](d, i);
            // The transition leaving step t; blank on the last row.
            const bool has_step = t < horizon;
            for (Eigen::Index f = 0; f < action_dim; ++f) {
                os << ',';
                if (has_step) os << actions[t](f, i);
            }
            for (Eigen::Index d = 0; d < state_dim; ++d) {
                os << ',';
                if (has_step) os << mean[t](d, i);
            }
            for (Eigen::Index d = 0; d < state_dim; ++d) {
                os << ',';
                if (has_step) os << std[t](d, i);
            }
            for (Eigen::Index d = 0; d < state_dim; ++d) {
                os << ',';
                if (has_step) os << eps[t](d, i);
            }
            os << ',' << costs(t, i) << '\n';
        }
    }
    os.precision(old_precision);
}

PropagateResult propagate_step(const TransitionModel& model, const Controller& policy, const Vector& theta,
                               const Matrix& states, const CounterRng& rng, std::uint32_t step, bool with_grads,
                               int workers) {
    require(states.rows() == model.state_dim() && policy.state_dim() == model.state_dim(),
            "propagate_step: state dimension mismatch");
    require(policy.action_dim() == model.action_dim(), "propagate_step: action dimension mismatch");
    require(states.cols() >= 1, "propagate_step: need at least one particle");

    const Eigen::Index d = model.state_dim();
    const Eigen::Index f = model.action_dim();
    const Eigen::Index p = states.cols();

    PropagateResult out;
    out.actions.resize(f, p);
    std::vector<Matrix> du_dx(with_grads ? p : 0);
    if (with_grads) {
        out.jacobians.resize(p);
    }
    parallel_for(p, workers, 1, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t i = begin; i < end; ++i) {
            if (with_grads) {
                out.actions.col(i) = policy.act(theta, states.col(i), &du_dx[i], &out.jacobians[i].du_dtheta);
            } else {
                out.actions.col(i) = policy.act(theta, states.col(i));
            }
        }
    });

    TransitionBatch batch = make_transition_batch(d, f, p, with_grads);
    std::mutex flag_mutex;
    parallel_for(p, workers, GpDynamics::kBlock, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
        Flags local;
        model.predict(states, out.actions, begin, end, with_grads, batch, local);
        const std::lock_guard<std::mutex> lock(flag_mutex);
        out.flags.merge(local);
    });

    out.eps.resize(d, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index k = 0; k < d; ++k) {
            out.eps(k, i) = rng.normal(Stream::transition, static_cast<std::uint32_t>(i), step, static_cast<std::uint32_t>(k));
        }
    }
    out.mean = std::move(batch.mean);
    out.std = std::move(batch.std);
    out.next = out.mean + out.std.cwiseProduct(out.eps);

    if (with_grads) {
        for (Eigen::Index i = 0; i < p; ++i) {
            StepJacobians& j = out.jacobians[i];
            j.zeta_dx.resize(2 * d, d);
            j.zeta_dx.topRows(d) = batch.dmean_dx[i] + batch.dmean_du[i] * du_dx[i];
            j.zeta_dx.bottomRows(d) = batch.dstd_dx[i] + batch.dstd_du[i] * du_dx[i];
            j.zeta_du.resize(2 * d, f);
            j.zeta_du.topRows(d) = batch.dmean_du[i];
            j.zeta_du.bottomRows(d) = batch.dstd_du[i];
        }
    }
    return out;
}

ResampleResult gr_resample_with_draws(const Matrix& states, const Matrix& draws) {
    require(states.cols() >= 2, "gr_resample: need at least two particles");
    require(draws.rows() == states.rows() && draws.cols() == states.cols(), "gr_resample: draw shape mismatch");
    const auto p = static_cast<double>(states.cols());
    ResampleResult out;
    out.mean = states.rowwise().mean();
    const Matrix centered = states.colwise() - out.mean;
    out.cov = centered * centered.transpose() / (p - 1.0);
    const JitteredCholesky jc = robust_cholesky(out.cov, &out.flags);
    out.chol = jc.chol;
    out.draws = draws;
    out.states = (out.chol * draws).colwise() + out.mean;
    return out;
}

ResampleResult gr_resample(const Matrix& states, const CounterRng& rng, std::uint32_t step) {
    Matrix z(states.rows(), states.cols());
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
        for (Eigen::Index k = 0; k < z.rows(); ++k) {
            z(k, i) = rng.normal(Stream::resample, static_cast<std::uint32_t>(i), step, static_cast<std::uint32_t>(k));
        }
    }
    return gr_resample_with_draws(states, z);
}

TrajectoryRecord rollout_batch(const TransitionModel& model, const Controller& policy, const CostFunction& cost,
                               const Vector& theta, const RolloutConfig& cfg, const InitialStateDist& init,
                               std::uint64_t iteration) {
    require(cfg.particles >= 1 && cfg.horizon >= 0, "rollout_batch: need particles >= 1 and horizon >= 0");
    require(cfg.noise_variance_multiplier >= 0.0, "rollout_batch: noise multiplier must be non-negative");
    require(!uses_resampling(cfg.mode) || cfg.particles >= 2, "rollout_batch: resampling needs at least two particles");
    require(theta.size() == policy.param_count(), "rollout_batch: parameter count mismatch");
    const Eigen::Index d = model.state_dim();
    const Eigen::Index p = cfg.particles;
    const Eigen::Index horizon = cfg.horizon;
    require(init.mean.size() == d && init.covariance.rows() == d && init.covariance.cols() == d,
            "rollout_batch: initial distribution dimension mismatch");

    TrajectoryRecord tape;
    tape.particles = p;
    tape.horizon = horizon;
    tape.state_dim = d;
    tape.action_dim = model.action_dim();
    tape.param_count = policy.param_count();
    tape.mode = cfg.mode;
    tape.seed = rollout_seed(cfg, iteration);
    tape.truncated_at.assign(p, horizon + 1);
    const CounterRng rng(tape.seed);

    Matrix init_chol = Matrix::Zero(d, d);
    if (!init.covariance.isZero(0.0)) {
        init_chol = robust_cholesky(init.covariance, &tape.flags).chol;
    }
    Matrix x0(d, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        Vector e(d);
        for (Eigen::Index k = 0; k < d; ++k) {
            e[k] = rng.normal(Stream::initial_state, static_cast<std::uint32_t>(i), 0, static_cast<std::uint32_t>(k));
        }
        x0.col(i) = init.mean + init_chol * e;
    }
    tape.states.push_back(std::move(x0));
    tape.costs.resize(horizon + 1, p);

    const bool resample = uses_resampling(cfg.mode);
    const auto evaluate_cost = [&](Eigen::Index t) {
        Matrix grads(d, p);
        for (Eigen::Index i = 0; i < p; ++i) {
            Vector g;
            tape.costs(t, i) = cost.value_grad(tape.states[t].col(i), g);
            grads.col(i) = g;
        }
        tape.cost_grads.push_back(std::move(grads));
    };

    for (Eigen::Index t = 0; t < horizon; ++t) {
        evaluate_cost(t);
        const auto step = static_cast<std::uint32_t>(t);
        if (resample && t > 0) {
            ResampleResult r = gr_resample(tape.states[t], rng, step);
            tape.flags.merge(r.flags);
            tape.batch_mean.push_back(std::move(r.mean));
            tape.batch_cov.push_back(std::move(r.cov));
            tape.batch_chol.push_back(std::move(r.chol));
            tape.resample_draws.push_back(std::move(r.draws));
            tape.inputs.push_back(std::move(r.states));
        } else {
            if (resample) {
                tape.batch_mean.emplace_back();
                tape.batch_cov.emplace_back();
                tape.batch_chol.emplace_back();
                tape.resample_draws.emplace_back();
            }
            tape.inputs.push_back(tape.states[t]);
        }

        PropagateResult step_out =
            propagate_step(model, policy, theta, tape.inputs[t], rng, step, cfg.record_jacobians, cfg.workers);
        tape.flags.merge(step_out.flags);

        // Particles that blew up (or already did) are held at their last finite input.
        for (Eigen::Index i = 0; i < p; ++i) {
            const bool frozen = tape.truncated_at[i] <= t;
            if (frozen || !step_out.next.col(i).allFinite()) {
                if (!frozen) {
                    tape.truncated_at[i] = t + 1;
                    tape.flags.raise(Flag::non_finite_state);
                }
                step_out.mean.col(i) = tape.inputs[t].col(i);
                step_out.std.col(i).setOnes();
                step_out.eps.col(i).setZero();
                step_out.next.col(i) = step_out.mean.col(i);
                if (cfg.record_jacobians) {
                    StepJacobians& j = step_out.jacobians[i];
                    j.zeta_dx.setZero();
                    j.zeta_du.setZero();
                    j.du_dtheta.setZero();
                }
            }
        }

        tape.actions.push_back(std::move(step_out.actions));
        tape.mean.push_back(std::move(step_out.mean));
        tape.std.push_back(std::move(step_out.std));
        tape.eps.push_back(std::move(step_out.eps));
        tape.states.push_back(std::move(step_out.next));
        if (cfg.record_jacobians) {
            tape.jacobians.push_back(std::move(step_out.jacobians));
        }
    }
    evaluate_cost(horizon);
    return tape;
}

TrajectoryRecord rollout_batch(const GpModel& model, const Controller& policy, const CostFunction& cost,
                               const Vector& theta, const RolloutConfig& cfg, const InitialStateDist& init,
                               std::uint64_t iteration) {
    const GpDynamics dynamics(model, policy.action_dim(), cfg.drop_model_uncertainty, cfg.noise_variance_multiplier);
    return rollout_batch(dynamics, policy, cost, theta, cfg, init, iteration);
}

}  // namespace pipps
