#include "pipps/rollout.hpp"
#include "support/toy_systems.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace pipps;

namespace {

GpModel small_cartpole_model() {
    const CounterRng rng(21);
    const Eigen::Index n = 40;
    Matrix x(n, 5);
    Matrix y(n, 4);
    const CartPoleParams params;
    for (Eigen::Index i = 0; i < n; ++i) {
        CartPoleState s;
        for (int k = 0; k < 4; ++k) {
            s[k] = rng.normal(Stream::misc, 1, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(k));
        }
        s[1] += 3.0;
        const double u = 10.0 * (2.0 * rng.uniform(Stream::misc, 2, static_cast<std::uint32_t>(i), 0) - 1.0);
        x.row(i) << s.transpose(), u;
        y.row(i) = (step_dynamics(s, u, params) - s).transpose();
    }
    std::vector<GpHyperparams> hyp;
    for (int a = 0; a < 4; ++a) {
        hyp.push_back(GpHyperparams::from_natural((Vector(5) << 2.0, 2.0, 2.0, 2.0, 10.0).finished(), 1.0, 0.05));
    }
    return GpModel(x, y, hyp);
}

Policy small_policy() {
    PolicyConfig cfg;
    cfg.basis_count = 10;
    return Policy(cfg);
}

Vector small_theta(const Policy& pol) {
    const InitialStateDist init;
    return pol.initial_params(cartpole_policy_init_info(init.mean, init.covariance.diagonal().cwiseSqrt()), CounterRng(2));
}

}  // namespace

TEST_CASE("mode names") {
    for (auto m : {RolloutMode::plain, RolloutMode::fixed_seed, RolloutMode::gaussian_resample,
                   RolloutMode::gaussian_resample_fixed_seed}) {
        CHECK(rollout_mode_from_string(to_string(m)) == m);
    }
    CHECK(uses_resampling(RolloutMode::gaussian_resample_fixed_seed));
    CHECK(uses_fixed_seed(RolloutMode::gaussian_resample_fixed_seed));
    CHECK_FALSE(uses_fixed_seed(RolloutMode::gaussian_resample));
}

TEST_CASE("ablations: dropping model uncertainty samples with sigma_n exactly") {
    const GpModel model = small_cartpole_model();
    const Matrix states = Matrix::Constant(4, 3, 0.2);
    const Matrix actions = Matrix::Constant(1, 3, 1.5);
    Flags flags;
    TransitionBatch full = make_transition_batch(4, 1, 3, false);
    GpDynamics(model, 1).predict(states, actions, 0, 3, false, full, flags);
    TransitionBatch dropped = make_transition_batch(4, 1, 3, false);
    GpDynamics(model, 1, true).predict(states, actions, 0, 3, false, dropped, flags);
    TransitionBatch boosted = make_transition_batch(4, 1, 3, false);
    GpDynamics(model, 1, false, 100.0).predict(states, actions, 0, 3, false, boosted, flags);
    for (int a = 0; a < 4; ++a) {
        const double sn = model.hyperparams(a).noise_std();
        CHECK(dropped.std(a, 0) == sn);
        CHECK(full.std(a, 0) > sn);
        const double sf2 = full.std(a, 0) * full.std(a, 0) - sn * sn;
        CHECK(boosted.std(a, 0) * boosted.std(a, 0) == doctest::Approx(sf2 + 100.0 * sn * sn).epsilon(1e-12));
        CHECK(dropped.mean(a, 0) == full.mean(a, 0));
    }
}

TEST_CASE("tape shapes and the reparameterization identity") {
    const GpModel model = small_cartpole_model();
    const Policy pol = small_policy();
    const CartPoleCost cost{CostConfig{}};
    RolloutConfig cfg;
    cfg.seed = 3;
    const TrajectoryRecord tape = rollout_batch(model, pol, cost, small_theta(pol), cfg, InitialStateDist{});
    REQUIRE(tape.states.size() == 31);
    CHECK(tape.states[0].rows() == 4);
    CHECK(tape.states[0].cols() == 300);
    CHECK(tape.costs.rows() == 31);
    CHECK(tape.jacobians.size() == 30);
    for (std::size_t t = 0; t < 30; ++t) {
        const Matrix rebuilt = (tape.mean[t].array() + tape.std[t].array() * tape.eps[t].array()).matrix();
        CHECK(rebuilt == tape.states[t + 1]);
        CHECK(tape.inputs[t] == tape.states[t]);
    }
    // standard error of the mean return is the sample std over sqrt(P)
    const Vector g = tape.returns();
    const double sd = std::sqrt((g.array() - g.mean()).square().sum() / (g.size() - 1));
    CHECK(tape.return_standard_error() <= sd / std::sqrt(300.0) * (1.0 + 1e-12));
}

TEST_CASE("fixed seed makes the rollout a deterministic function of theta") {
    const GpModel model = small_cartpole_model();
    const Policy pol = small_policy();
    const CartPoleCost cost{CostConfig{}};
    const Vector theta = small_theta(pol);
    RolloutConfig cfg;
    cfg.particles = 20;
    cfg.mode = RolloutMode::fixed_seed;
    cfg.seed = 9;
    const auto a = rollout_batch(model, pol, cost, theta, cfg, InitialStateDist{}, 0);
    const auto b = rollout_batch(model, pol, cost, theta, cfg, InitialStateDist{}, 17);
    CHECK(a.returns() == b.returns());
    cfg.mode = RolloutMode::plain;
    const auto c = rollout_batch(model, pol, cost, theta, cfg, InitialStateDist{}, 0);
    const auto d = rollout_batch(model, pol, cost, theta, cfg, InitialStateDist{}, 1);
    CHECK(c.returns() != d.returns());
    CHECK(rollout_seed(cfg, 0) != rollout_seed(cfg, 1));
}

TEST_CASE("worker count does not change the tape") {
    const GpModel model = small_cartpole_model();
    const Policy pol = small_policy();
    const CartPoleCost cost{CostConfig{}};
    const Vector theta = small_theta(pol);
    RolloutConfig cfg;
    cfg.particles = 150;
    cfg.horizon = 8;
    cfg.seed = 4;
    const auto one = rollout_batch(model, pol, cost, theta, cfg, InitialStateDist{});
    cfg.workers = 3;
    const auto three = rollout_batch(model, pol, cost, theta, cfg, InitialStateDist{});
    for (std::size_t t = 0; t < one.states.size(); ++t) {
        CHECK(one.states[t] == three.states[t]);
    }
    for (std::size_t t = 0; t < one.jacobians.size(); ++t) {
        for (Eigen::Index i = 0; i < 150; ++i) {
            CHECK(one.jacobians[t][i].zeta_dx == three.jacobians[t][i].zeta_dx);
        }
    }
}

TEST_CASE("particle draws do not depend on the particle count") {
    const GpModel model = small_cartpole_model();
    const Policy pol = small_policy();
    const CartPoleCost cost{CostConfig{}};
    const Vector theta = small_theta(pol);
    RolloutConfig cfg;
    cfg.horizon = 5;
    cfg.particles = 10;
    const auto small = rollout_batch(model, pol, cost, theta, cfg, InitialStateDist{});
    cfg.particles = 100;
    const auto large = rollout_batch(model, pol, cost, theta, cfg, InitialStateDist{});
    CHECK(small.states.back() == large.states.back().leftCols(10));
}

TEST_CASE("identical particles with identical draws stay identical") {
    const GpModel model = small_cartpole_model();
    const Policy pol = small_policy();
    const Matrix states = Matrix::Constant(4, 5, 0.3);
    const CounterRng rng(1);
    const PropagateResult r = propagate_step(GpDynamics(model, 1), pol, small_theta(pol), states, rng, 0, false);
    for (Eigen::Index i = 1; i < 5; ++i) {
        CHECK(r.mean.col(i) == r.mean.col(0));
        CHECK(r.std.col(i) == r.std.col(0));
        const Vector next = r.mean.col(i) + r.std.col(i).cwiseProduct(r.eps.col(0));
        CHECK(next == (r.mean.col(0) + r.std.col(0).cwiseProduct(r.eps.col(0))));
    }
}

TEST_CASE("horizon zero returns the initial cost") {
    const toy::LinearGaussian model(Matrix::Identity(1, 1), Matrix::Ones(1, 1), Vector::Constant(1, 0.1));
    const toy::Affine pol(1, 1);
    const toy::Quadratic cost;
    RolloutConfig cfg;
    cfg.particles = 5;
    cfg.horizon = 0;
    InitialStateDist init;
    init.mean = Vector::Constant(1, 0.5);
    init.covariance = Matrix::Constant(1, 1, 0.01);
    const auto tape = rollout_batch(model, pol, cost, Vector::Zero(2), cfg, init);
    for (Eigen::Index i = 0; i < 5; ++i) {
        CHECK(tape.returns()[i] == cost.value(tape.states[0].col(i)));
    }
}

TEST_CASE("GR: zero draws put every particle at the batch mean") {
    Matrix states(2, 4);
    states << 1.0, 2.0, 3.0, 6.0, -1.0, 0.0, 2.0, 3.0;
    const ResampleResult r = gr_resample_with_draws(states, Matrix::Zero(2, 4));
    for (Eigen::Index i = 0; i < 4; ++i) {
        CHECK(r.states.col(i) == r.mean);
    }
    CHECK(r.mean == Eigen::Vector2d(3.0, 1.0));
    const Matrix centered = states.colwise() - r.mean;
    CHECK(r.cov.isApprox(centered * centered.transpose() / 3.0, 1e-15));
    CHECK((r.chol * r.chol.transpose()).isApprox(r.cov, 1e-14));
}

TEST_CASE("GR: identical particles fall back to jitter") {
    const Matrix states = Matrix::Constant(3, 6, 0.4);
    const ResampleResult r = gr_resample(states, CounterRng(1), 2);
    CHECK(r.flags.has(Flag::covariance_jitter));
    const double spread = (r.states.colwise() - r.mean).cwiseAbs().maxCoeff();
    CHECK(spread > 0.0);
    CHECK(spread < 1e-3);
}

TEST_CASE("GR preserves the batch mean statistically") {
    const Eigen::Index p = 100000;
    const CounterRng rng(8);
    Matrix states(2, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        const double a = rng.normal(Stream::misc, static_cast<std::uint32_t>(i), 0, 0);
        const double b = rng.normal(Stream::misc, static_cast<std::uint32_t>(i), 1, 0);
        states.col(i) << 1.0 + 2.0 * a, -0.5 + 0.5 * a + 0.3 * b * b;
    }
    const ResampleResult r = gr_resample(states, CounterRng(9), 1);
    const Vector m = r.states.rowwise().mean();
    for (int k = 0; k < 2; ++k) {
        CHECK(std::abs(m[k] - r.mean[k]) < 3.0 * std::sqrt(r.cov(k, k) / p));
    }
}

TEST_CASE("GR tapes record the resampling") {
    const GpModel model = small_cartpole_model();
    const Policy pol = small_policy();
    const CartPoleCost cost{CostConfig{}};
    RolloutConfig cfg;
    cfg.particles = 30;
    cfg.horizon = 4;
    cfg.mode = RolloutMode::gaussian_resample;
    const auto tape = rollout_batch(model, pol, cost, small_theta(pol), cfg, InitialStateDist{});
    for (Eigen::Index t = 1; t < 4; ++t) {
        const Matrix rebuilt = (tape.batch_chol[t] * tape.resample_draws[t]).colwise() + tape.batch_mean[t];
        CHECK(rebuilt == tape.inputs[t]);
    }
    CHECK(tape.inputs[0] == tape.states[0]);
}

TEST_CASE("non-finite particles are truncated and flagged") {
    struct Exploding final : TransitionModel {
        Eigen::Index state_dim() const override { return 1; }
        Eigen::Index action_dim() const override { return 1; }
        void predict(const Matrix& states, const Matrix&, Eigen::Index begin, Eigen::Index end, bool with_grads,
                     TransitionBatch& out, Flags&) const override {
            for (Eigen::Index i = begin; i < end; ++i) {
                out.mean(0, i) = i == 0 ? INFINITY : states(0, i);
                out.std(0, i) = 0.1;
                if (with_grads) {
                    out.dmean_dx[i].setIdentity();
                    out.dmean_du[i].setZero();
                    out.dstd_dx[i].setZero();
                    out.dstd_du[i].setZero();
                }
            }
        }
    } model;
    const toy::Affine pol(1, 1);
    const toy::Quadratic cost;
    RolloutConfig cfg;
    cfg.particles = 3;
    cfg.horizon = 3;
    InitialStateDist init;
    init.mean = Vector::Zero(1);
    init.covariance = Matrix::Constant(1, 1, 0.01);
    const auto tape = rollout_batch(model, pol, cost, Vector::Zero(2), cfg, init);
    CHECK(tape.flags.has(Flag::non_finite_state));
    CHECK(tape.truncated_at[0] == 1);
    CHECK(tape.truncated_at[1] == 4);
    CHECK(tape.states.back().allFinite());
}

TEST_CASE("tape CSV dump") {
    const toy::LinearGaussian model(Matrix::Identity(1, 1), Matrix::Ones(1, 1), Vector::Constant(1, 0.1));
    const toy::Affine pol(1, 1);
    const toy::Quadratic cost;
    RolloutConfig cfg;
    cfg.particles = 2;
    cfg.horizon = 2;
    InitialStateDist init;
    init.mean = Vector::Zero(1);
    init.covariance = Matrix::Constant(1, 1, 0.01);
    std::ostringstream os;
    rollout_batch(model, pol, cost, Vector::Zero(2), cfg, init).write_csv(os);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    CHECK(header == "t,i,x0,u0,mu0,sigma0,eps0,cost");
    int rows = 0;
    for (std::string line; std::getline(is, line);) {
        ++rows;
    }
    CHECK(rows == 6);
}
