#pragma once

#include "pipps/common.hpp"
#include "pipps/rng.hpp"

#include <string>

namespace pipps {

/// Cart-pole state [s, beta, s_dot, beta_dot]. beta = 0 is upright, pi is
/// hanging down, and it is never wrapped.
using CartPoleState = Eigen::Vector4d;

namespace cartpole {
inline constexpr int kPosition = 0;
inline constexpr int kAngle = 1;
inline constexpr int kVelocity = 2;
inline constexpr int kAngularVelocity = 3;
inline constexpr int kStateDim = 4;
}  // namespace cartpole

struct CartPoleParams {
    double cart_mass = 0.5;    // kg
    double pole_mass = 0.5;    // kg
    double pole_length = 0.6;  // m, uniform rod
    double friction = 0.1;     // N s / m
    double gravity = 9.82;     // m / s^2
    double max_force = 10.0;   // N
    double control_period = 0.1;  // s
    int substeps = 5;
};

struct NoiseConfig {
    Eigen::Vector4d base_std{0.01, 1.0 * kDegree, 0.1, 10.0 * kDegree};
    double multiplier = 1.0;  ///< k in sigma^2 = k sigma_base^2

    Eigen::Vector4d std() const;

    static constexpr double kDegree = 0.017453292519943295;
};

enum class CostVariant { angle, tip };

std::string to_string(CostVariant v);
CostVariant cost_variant_from_string(const std::string& s);

struct CostConfig {
    CostVariant variant = CostVariant::angle;
    Eigen::Vector4d target = Eigen::Vector4d::Zero();
    Eigen::Matrix4d weights = Eigen::Vector4d(1.0, 1.0, 0.0, 0.0).asDiagonal();
    double tip_lengthscale = 0.25;
    double pole_length = 0.6;
};

/// Scalar per-step cost with its state gradient. Costs are bounded in [0, 1).
class CostFunction {
public:
    virtual ~CostFunction() = default;
    virtual double value(const Vector& x) const = 0;
    virtual double value_grad(const Vector& x, Vector& grad) const = 0;
};

class CartPoleCost final : public CostFunction {
public:
    explicit CartPoleCost(CostConfig config) : config_(std::move(config)) {}

    double value(const Vector& x) const override;
    double value_grad(const Vector& x, Vector& grad) const override;

    const CostConfig& config() const { return config_; }

private:
    CostConfig config_;
};

double cost(const CartPoleState& x, const CostConfig& cfg);

/// sat(u) = 9 sin(u) / 8 + sin(3u) / 8, applied elementwise. Range [-1, 1].
double saturate(double u);
double saturate_derivative(double u);
Vector saturate(const Vector& u);

/// Time derivative of the state under a constant horizontal force.
CartPoleState cartpole_derivative(const CartPoleState& x, double force, const CartPoleParams& p);

/// RK4 over `dt` with zero-order-hold force, split into `substeps` equal steps.
CartPoleState step_dynamics(const CartPoleState& x, double force, double dt, int substeps, const CartPoleParams& p);

/// One control period with the parameters' step count.
CartPoleState step_dynamics(const CartPoleState& x, double force, const CartPoleParams& p);

/// Mechanical energy (kinetic + potential with the pivot as reference).
double cartpole_energy(const CartPoleState& x, const CartPoleParams& p);

/// Additive Gaussian observation noise with sigma^2 = k sigma_base^2. `trial`
/// and `step` select the counter-based stream.
CartPoleState observe(const CartPoleState& x, const NoiseConfig& noise, const CounterRng& rng, std::uint32_t trial,
                      std::uint32_t step);

/// Gaussian initial-state distribution.
struct InitialStateDist {
    Vector mean = (Vector(4) << 0.0, 3.141592653589793, 0.0, 0.0).finished();
    Matrix covariance = Matrix::Identity(4, 4) * 0.01;
};

}  // namespace pipps
