#include "pipps/environment.hpp"

#include <algorithm>
#include <cmath>

namespace pipps {

Eigen::Vector4d NoiseConfig::std() const {
    require(multiplier >= 0.0, "NoiseConfig: multiplier must be non-negative");
    return base_std * std::sqrt(multiplier);
}

std::string to_string(CostVariant v) { return v == CostVariant::angle ? "angle" : "tip"; }

CostVariant cost_variant_from_string(const std::string& s) {
    if (s == "angle") {
        return CostVariant::angle;
    }
    if (s == "tip") {
        return CostVariant::tip;
    }
    throw ContractError("unknown cost variant '" + s + "' (expected angle or tip)");
}

namespace {

// Exponent of the saturating cost and its gradient.
double cost_exponent(const Vector& x, const CostConfig& cfg, Vector* grad) {
    require(x.size() == cartpole::kStateDim, "cost: expected a 4-dimensional cart-pole state");
    if (cfg.variant == CostVariant::angle) {
        const Eigen::Vector4d d = x - cfg.target;
        const Eigen::Matrix4d qs = 0.5 * (cfg.weights + cfg.weights.transpose());
        if (grad != nullptr) {
            *grad = 2.0 * qs * d;
        }
        return d.dot(qs * d);
    }
    const double l = cfg.pole_length;
    const double s = x[cartpole::kPosition] - cfg.target[cartpole::kPosition];
    const double b = x[cartpole::kAngle];
    const double dx = s + l * std::sin(b);
    const double dy = l * std::cos(b) - l;
    const double inv_w2 = 1.0 / (cfg.tip_lengthscale * cfg.tip_lengthscale);
    if (grad != nullptr) {
        grad->setZero(cartpole::kStateDim);
        (*grad)[cartpole::kPosition] = 2.0 * dx * inv_w2;
        (*grad)[cartpole::kAngle] = (2.0 * dx * l * std::cos(b) - 2.0 * dy * l * std::sin(b)) * inv_w2;
    }
    return (dx * dx + dy * dy) * inv_w2;
}

}  // namespace

// 1 - exp(-z) rounds to 1 once exp(-z) < 2^-53; keep the result below 1.
constexpr double kCostMax = 1.0 - 0x1.0p-53;

double CartPoleCost::value(const Vector& x) const {
    return std::min(1.0 - std::exp(-cost_exponent(x, config_, nullptr)), kCostMax);
}

double CartPoleCost::value_grad(const Vector& x, Vector& grad) const {
    const double z = cost_exponent(x, config_, &grad);
    const double e = std::exp(-z);
    grad *= e;
    return std::min(1.0 - e, kCostMax);
}

double cost(const CartPoleState& x, const CostConfig& cfg) { return CartPoleCost(cfg).value(x); }

double saturate(double u) { return std::clamp(9.0 * std::sin(u) / 8.0 + std::sin(3.0 * u) / 8.0, -1.0, 1.0); }

double saturate_derivative(double u) { return 9.0 * std::cos(u) / 8.0 + 3.0 * std::cos(3.0 * u) / 8.0; }

Vector saturate(const Vector& u) { return u.unaryExpr([](double v) { return saturate(v); }); }

CartPoleState cartpole_derivative(const CartPoleState& x, double force, const CartPoleParams& p) {
    const double m = p.pole_mass;
    const double mt = p.cart_mass + p.pole_mass;
    const double l = p.pole_length;
    const double sb = std::sin(x[cartpole::kAngle]);
    const double cb = std::cos(x[cartpole::kAngle]);
    const double sd = x[cartpole::kVelocity];
    const double bd = x[cartpole::kAngularVelocity];
    const double f = force - p.friction * sd;
    const double den = 4.0 * mt - 3.0 * m * cb * cb;

    CartPoleState dx;
    dx[cartpole::kPosition] = sd;
    dx[cartpole::kAngle] = bd;
    dx[cartpole::kVelocity] = (4.0 * f + 2.0 * m * l * bd * bd * sb - 3.0 * m * p.gravity * sb * cb) / den;
    dx[cartpole::kAngularVelocity] = 6.0 * (mt * p.gravity * sb - f * cb - 0.5 * m * l * bd * bd * sb * cb) / (l * den);
    return dx;
}

CartPoleState step_dynamics(const CartPoleState& x, double force, double dt, int substeps, const CartPoleParams& p) {
    require(dt > 0.0 && substeps >= 1, "step_dynamics: dt and substeps must be positive");
    require(std::abs(force) <= p.max_force * (1.0 + 1e-12), "step_dynamics: force exceeds max_force");
    require(x.allFinite(), "step_dynamics: non-finite state");
    const double h = dt / substeps;
    CartPoleState s = x;
    for (int i = 0; i < substeps; ++i) {
        const CartPoleState k1 = cartpole_derivative(s, force, p);
        const CartPoleState k2 = cartpole_derivative(s + 0.5 * h * k1, force, p);
        const CartPoleState k3 = cartpole_derivative(s + 0.5 * h * k2, force, p);
        const CartPoleState k4 = cartpole_derivative(s + h * k3, force, p);
        s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return s;
}

CartPoleState step_dynamics(const CartPoleState& x, double force, const CartPoleParams& p) {
    return step_dynamics(x, force, p.control_period, p.substeps, p);
}

double cartpole_energy(const CartPoleState& x, const CartPoleParams& p) {
    const double m = p.pole_mass;
    const double l = p.pole_length;
    const double sd = x[cartpole::kVelocity];
    const double bd = x[cartpole::kAngularVelocity];
    const double kinetic = 0.5 * (p.cart_mass + m) * sd * sd + 0.5 * m * l * std::cos(x[cartpole::kAngle]) * sd * bd +
                           m * l * l * bd * bd / 6.0;
    const double potential = 0.5 * m * p.gravity * l * std::cos(x[cartpole::kAngle]);
    return kinetic + potential;
}

CartPoleState observe(const CartPoleState& x, const NoiseConfig& noise, const CounterRng& rng, std::uint32_t trial,
                      std::uint32_t step) {
    const Eigen::Vector4d sd = noise.std();
    CartPoleState y = x;
    for (int d = 0; d < cartpole::kStateDim; ++d) {
        if (sd[d] > 0.0) {
            y[d] += sd[d] * rng.normal(Stream::observation, trial, step, static_cast<std::uint32_t>(d));
        }
    }
    return y;
}

}  // namespace pipps
