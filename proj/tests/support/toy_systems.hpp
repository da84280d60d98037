#pragma once

#include "pipps/dynamics.hpp"
#include "pipps/environment.hpp"
#include "pipps/policy.hpp"
#include "pipps/rollout.hpp"

#include <cmath>

namespace pipps::toy {

// x' = A x + B u + diag(noise) e
class LinearGaussian final : public TransitionModel {
public:
    LinearGaussian(Matrix a, Matrix b, Vector noise) : a_(std::move(a)), b_(std::move(b)), noise_(std::move(noise)) {}

    Eigen::Index state_dim() const override { return a_.rows(); }
    Eigen::Index action_dim() const override { return b_.cols(); }

    void predict(const Matrix& states, const Matrix& actions, Eigen::Index begin, Eigen::Index end, bool with_grads,
                 TransitionBatch& out, Flags&) const override {
        for (Eigen::Index i = begin; i < end; ++i) {
            out.mean.col(i) = a_ * states.col(i) + b_ * actions.col(i);
            out.std.col(i) = noise_;
            if (with_grads) {
                out.dmean_dx[i] = a_;
                out.dmean_du[i] = b_;
                out.dstd_dx[i].setZero();
                out.dstd_du[i].setZero();
            }
        }
    }

private:
    Matrix a_;
    Matrix b_;
    Vector noise_;
};

// u = K x + c, theta = [K (F x D, row-major), c]
class Affine final : public Controller {
public:
    Affine(Eigen::Index d, Eigen::Index f) : d_(d), f_(f) {}

    Eigen::Index state_dim() const override { return d_; }
    Eigen::Index action_dim() const override { return f_; }
    Eigen::Index param_count() const override { return f_ * d_ + f_; }

    Vector act(const Vector& theta, const Vector& x, Matrix* du_dx, Matrix* du_dtheta) const override {
        Vector u = theta.tail(f_);
        for (Eigen::Index r = 0; r < f_; ++r) {
            for (Eigen::Index c = 0; c < d_; ++c) {
                u[r] += theta[r * d_ + c] * x[c];
            }
        }
        if (du_dx != nullptr) {
            du_dx->resize(f_, d_);
            for (Eigen::Index r = 0; r < f_; ++r) {
                for (Eigen::Index c = 0; c < d_; ++c) {
                    (*du_dx)(r, c) = theta[r * d_ + c];
                }
            }
        }
        if (du_dtheta != nullptr) {
            du_dtheta->setZero(f_, param_count());
            for (Eigen::Index r = 0; r < f_; ++r) {
                for (Eigen::Index c = 0; c < d_; ++c) {
                    (*du_dtheta)(r, r * d_ + c) = x[c];
                }
                (*du_dtheta)(r, f_ * d_ + r) = 1.0;
            }
        }
        return u;
    }

private:
    Eigen::Index d_;
    Eigen::Index f_;
};

// c(x) = scale * |x|^2 + offset
class Quadratic final : public CostFunction {
public:
    explicit Quadratic(double offset = 0.0, double scale = 1.0) : offset_(offset), scale_(scale) {}

    double value(const Vector& x) const override { return scale_ * x.squaredNorm() + offset_; }
    double value_grad(const Vector& x, Vector& grad) const override {
        grad = 2.0 * scale_ * x;
        return value(x);
    }

private:
    double offset_;
    double scale_;
};

class Constant final : public CostFunction {
public:
    explicit Constant(double c) : c_(c) {}
    double value(const Vector&) const override { return c_; }
    double value_grad(const Vector& x, Vector& grad) const override {
        grad = Vector::Zero(x.size());
        return c_;
    }

private:
    double c_;
};

// Scalar chain x_{t+1} = a x_t + b u_t + sigma e, u = k x + c, x_0 ~ N(m0, v0),
// J = sum_{t=0..T} E[x_t^2]. Returns dJ/d(k, c) by differentiating the
// mean/variance recursion.
struct ScalarChain {
    double a = 0.9;
    double b = 0.5;
    double sigma = 0.3;
    double m0 = 1.0;
    double v0 = 0.04;
    int horizon = 2;

    Eigen::Vector2d analytic_gradient(double k, double c) const {
        double m = m0;
        double v = v0;
        double dm_dk = 0.0, dm_dc = 0.0, dv_dk = 0.0, dv_dc = 0.0;
        Eigen::Vector2d g = Eigen::Vector2d::Zero();
        for (int t = 1; t <= horizon; ++t) {
            const double gain = a + b * k;
            const double nm = gain * m + b * c;
            const double nv = gain * gain * v + sigma * sigma;
            const double ndm_dk = b * m + gain * dm_dk;
            const double ndm_dc = gain * dm_dc + b;
            const double ndv_dk = 2.0 * gain * b * v + gain * gain * dv_dk;
            const double ndv_dc = gain * gain * dv_dc;
            m = nm;
            v = nv;
            dm_dk = ndm_dk;
            dm_dc = ndm_dc;
            dv_dk = ndv_dk;
            dv_dc = ndv_dc;
            g[0] += 2.0 * m * dm_dk + dv_dk;
            g[1] += 2.0 * m * dm_dc + dv_dc;
        }
        return g;
    }
};

inline InitialStateDist point_init(const Vector& mean, double var = 0.0) {
    InitialStateDist init;
    init.mean = mean;
    init.covariance = Matrix::Identity(mean.size(), mean.size()) * var;
    return init;
}

// x1 ~ N(c, sigma^2) through u = c, cost x^2: dJ/dc = 2c.
inline TrajectoryRecord one_step_tape(double c, double sigma, Eigen::Index particles, std::uint64_t seed,
                               RolloutMode mode = RolloutMode::plain, double cost_offset = 0.0) {
    const toy::LinearGaussian model(Matrix::Zero(1, 1), Matrix::Ones(1, 1), Vector::Constant(1, sigma));
    const toy::Affine policy(1, 1);
    const toy::Quadratic cost(cost_offset);
    RolloutConfig cfg;
    cfg.particles = particles;
    cfg.horizon = 1;
    cfg.mode = mode;
    cfg.seed = seed;
    return rollout_batch(model, policy, cost, Eigen::Vector2d(0.0, c), cfg, point_init(Vector::Zero(1)));
}

inline TrajectoryRecord chain_tape(const toy::ScalarChain& chain, double k, double c, Eigen::Index particles,
                            std::uint64_t seed, RolloutMode mode = RolloutMode::plain, double cost_offset = 0.0) {
    const toy::LinearGaussian model(Matrix::Constant(1, 1, chain.a), Matrix::Constant(1, 1, chain.b),
                                    Vector::Constant(1, chain.sigma));
    const toy::Affine policy(1, 1);
    const toy::Quadratic cost(cost_offset);
    RolloutConfig cfg;
    cfg.particles = particles;
    cfg.horizon = chain.horizon;
    cfg.mode = mode;
    cfg.seed = seed;
    return rollout_batch(model, policy, cost, Eigen::Vector2d(k, c), cfg,
                         point_init(Vector::Constant(1, chain.m0), chain.v0));
}

}  // namespace pipps::toy
