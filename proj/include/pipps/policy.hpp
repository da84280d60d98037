#pragma once

#include "pipps/common.hpp"
#include "pipps/rng.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>

namespace pipps {

/// Deterministic state-feedback controller u = pi(x; theta) with a flat
/// parameter vector. The rollout and the gradient estimators only see this
/// interface.
class Controller {
public:
    virtual ~Controller() = default;

    virtual Eigen::Index state_dim() const = 0;
    virtual Eigen::Index action_dim() const = 0;
    virtual Eigen::Index param_count() const = 0;

    /// Action; when the Jacobian pointers are non-null they receive
    /// du/dx (F x D) and du/dtheta (F x |theta|).
    virtual Vector act(const Vector& theta, const Vector& x, Matrix* du_dx = nullptr,
                       Matrix* du_dtheta = nullptr) const = 0;
};

enum class PolicyKind { rbf, linear };

std::string to_string(PolicyKind k);
PolicyKind policy_kind_from_string(const std::string& s);

struct PolicyConfig {
    PolicyKind kind = PolicyKind::rbf;
    Eigen::Index state_dim = 4;
    Eigen::Index action_dim = 1;
    Eigen::Index basis_count = 50;
    double max_action = 10.0;
    /// State index replaced by (sin, cos) in the policy input; -1 disables.
    Eigen::Index angle_index = 1;
    bool train_centers = true;
    bool train_lengthscales = true;
};

/// Where initial RBF centers are drawn from. Ranges are in augmented input
/// space ([s, sin b, cos b, s_dot, b_dot] for the cart-pole).
struct PolicyInitInfo {
    Vector initial_mean;  ///< state space
    Vector initial_std;   ///< state space, per dimension
    Vector input_low;     ///< augmented input space
    Vector input_high;
    double initial_region_fraction = 0.2;
    double weight_std = 0.1;
};

/// u = u_max * sat(pi~(x_aug)), where pi~ is either an RBF network
/// sum_b w_b exp(-1/2 sum_e (z_e - c_be)^2 / lambda_e^2) or an affine map.
///
/// Parameter layout, RBF: [centers (B x E, row-major), log lambda (E),
/// weights (B x F, row-major)]. Linear: [matrix (F x E, row-major), bias (F)].
class Policy final : public Controller {
public:
    explicit Policy(PolicyConfig config);

    const PolicyConfig& config() const { return config_; }

    Eigen::Index state_dim() const override { return config_.state_dim; }
    Eigen::Index action_dim() const override { return config_.action_dim; }
    Eigen::Index input_dim() const;
    Eigen::Index param_count() const override;

    Vector act(const Vector& theta, const Vector& x, Matrix* du_dx = nullptr,
               Matrix* du_dtheta = nullptr) const override;

    /// Unsquashed network output pi~ with Jacobians w.r.t. the augmented
    /// input and theta.
    Vector raw(const Vector& theta, const Vector& z, Matrix* draw_dz = nullptr, Matrix* draw_dtheta = nullptr) const;

    /// Augmented input and its Jacobian (E x D).
    Vector augment(const Vector& x, Matrix* dz_dx = nullptr) const;

    /// 1 for trainable coordinates, 0 for frozen ones.
    Vector trainable_mask() const;

    Vector initial_params(const PolicyInitInfo& info, const CounterRng& rng) const;

private:
    PolicyConfig config_;
};

/// Policy structure together with its parameter vector; the unit stored in
/// checkpoints.
struct PolicyParams {
    PolicyConfig config;
    Vector theta;

    nlohmann::json to_json() const;
    static PolicyParams from_json(const nlohmann::json& j);
};

Vector policy_eval(const Policy& policy, const Vector& theta, const Vector& x);

struct PolicyJacobians {
    Matrix du_dx;
    Matrix du_dtheta;
};

PolicyJacobians policy_jacobians(const Policy& policy, const Vector& theta, const Vector& x);

PolicyParams policy_init(const PolicyConfig& config, const CounterRng& rng, const PolicyInitInfo& info);

/// Default init region for the cart-pole swing-up.
PolicyInitInfo cartpole_policy_init_info(const Vector& initial_mean, const Vector& initial_std);

}  // namespace pipps
