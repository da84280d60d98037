#include "pipps/policy.hpp"

#include "pipps/environment.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>

namespace pipps {

std::string to_string(PolicyKind k) { return k == PolicyKind::rbf ? "rbf" : "linear"; }

PolicyKind policy_kind_from_string(const std::string& s) {
    if (s == "rbf") {
        return PolicyKind::rbf;
    }
    if (s == "linear") {
        return PolicyKind::linear;
    }
    throw ContractError("unknown policy kind '" + s + "' (expected rbf or linear)");
}

Policy::Policy(PolicyConfig config) : config_(std::move(config)) {
    require(config_.state_dim >= 1 && config_.action_dim >= 1, "Policy: dimensions must be positive");
    require(config_.max_action > 0.0, "Policy: max_action must be positive");
    require(config_.angle_index < config_.state_dim, "Policy: angle_index out of range");
    require(config_.kind != PolicyKind::rbf || config_.basis_count >= 1, "Policy: RBF needs at least one basis");
}

Eigen::Index Policy::input_dim() const { return config_.state_dim + (config_.angle_index >= 0 ? 1 : 0); }

Eigen::Index Policy::param_count() const {
    const Eigen::Index e = input_dim();
    const Eigen::Index f = config_.action_dim;
    if (config_.kind == PolicyKind::rbf) {
        return config_.basis_count * e + e + config_.basis_count * f;
    }
    return f * e + f;
}

Vector Policy::augment(const Vector& x, Matrix* dz_dx) const {
    require(x.size() == config_.state_dim, "Policy: state dimension mismatch");
    const Eigen::Index ai = config_.angle_index;
    if (ai < 0) {
        if (dz_dx != nullptr) {
            *dz_dx = Matrix::Identity(x.size(), x.size());
        }
        return x;
    }
    Vector z(input_dim());
    z.head(ai) = x.head(ai);
    z[ai] = std::sin(x[ai]);
    z[ai + 1] = std::cos(x[ai]);
    z.tail(x.size() - ai - 1) = x.tail(x.size() - ai - 1);
    if (dz_dx != nullptr) {
        dz_dx->setZero(input_dim(), x.size());
        for (Eigen::Index d = 0; d < ai; ++d) {
            (*dz_dx)(d, d) = 1.0;
        }
        (*dz_dx)(ai, ai) = std::cos(x[ai]);
        (*dz_dx)(ai + 1, ai) = -std::sin(x[ai]);
        for (Eigen::Index d = ai + 1; d < x.size(); ++d) {
            (*dz_dx)(d + 1, d) = 1.0;
        }
    }
    return z;
}

Vector Policy::raw(const Vector& theta, const Vector& z, Matrix* draw_dz, Matrix* draw_dtheta) const {
    require(theta.size() == param_count(), "Policy: parameter count mismatch");
    const Eigen::Index e_dim = input_dim();
    const Eigen::Index f_dim = config_.action_dim;
    require(z.size() == e_dim, "Policy: input dimension mismatch");

    Vector out = Vector::Zero(f_dim);
    if (draw_dz != nullptr) {
        draw_dz->setZero(f_dim, e_dim);
    }
    if (draw_dtheta != nullptr) {
        draw_dtheta->setZero(f_dim, param_count());
    }

    if (config_.kind == PolicyKind::linear) {
        const Eigen::Map<const RowMatrix> a(theta.data(), f_dim, e_dim);
        out = a * z + theta.tail(f_dim);
        if (draw_dz != nullptr) {
            *draw_dz = a;
        }
        if (draw_dtheta != nullptr) {
            for (Eigen::Index f = 0; f < f_dim; ++f) {
                draw_dtheta->block(f, f * e_dim, 1, e_dim) = z.transpose();
                (*draw_dtheta)(f, f_dim * e_dim + f) = 1.0;
            }
        }
        return out;
    }

    const Eigen::Index nb = config_.basis_count;
    const Eigen::Map<const RowMatrix> centers(theta.data(), nb, e_dim);
    const Vector inv_l2 = (-2.0 * theta.segment(nb * e_dim, e_dim)).array().exp();
    const Eigen::Map<const RowMatrix> weights(theta.data() + nb * e_dim + e_dim, nb, f_dim);
    const Eigen::Index w_offset = nb * e_dim + e_dim;

    for (Eigen::Index b = 0; b < nb; ++b) {
        const Vector diff = z - centers.row(b).transpose();
        const Vector scaled = diff.cwiseProduct(inv_l2);  // (z - c) / lambda^2
        const double phi = std::exp(-0.5 * diff.dot(scaled));
        out += phi * weights.row(b).transpose();
        if (draw_dz != nullptr) {
            *draw_dz -= phi * weights.row(b).transpose() * scaled.transpose();
        }
        if (draw_dtheta != nullptr) {
            for (Eigen::Index f = 0; f < f_dim; ++f) {
                const double wp = weights(b, f) * phi;
                draw_dtheta->block(f, b * e_dim, 1, e_dim) = wp * scaled.transpose();
                draw_dtheta->block(f, nb * e_dim, 1, e_dim) += wp * diff.cwiseProduct(scaled).transpose();
                (*draw_dtheta)(f, w_offset + b * f_dim + f) = phi;
            }
        }
    }
    return out;
}

Vector Policy::act(const Vector& theta, const Vector& x, Matrix* du_dx, Matrix* du_dtheta) const {
    Matrix dz_dx;
    const Vector z = augment(x, du_dx != nullptr ? &dz_dx : nullptr);
    Matrix draw_dz;
    const Vector r = raw(theta, z, du_dx != nullptr ? &draw_dz : nullptr, du_dtheta);

    Vector u(r.size());
    Vector scale(r.size());
    for (Eigen::Index f = 0; f < r.size(); ++f) {
        u[f] = config_.max_action * saturate(r[f]);
        scale[f] = config_.max_action * saturate_derivative(r[f]);
    }
    if (du_dx != nullptr) {
        *du_dx = scale.asDiagonal() * (draw_dz * dz_dx);
    }
    if (du_dtheta != nullptr) {
        *du_dtheta = scale.asDiagonal() * (*du_dtheta);
    }
    return u;
}

Vector Policy::trainable_mask() const {
    Vector mask = Vector::Ones(param_count());
    if (config_.kind == PolicyKind::rbf) {
        const Eigen::Index e_dim = input_dim();
        const Eigen::Index nb = config_.basis_count;
        if (!config_.train_centers) {
            mask.head(nb * e_dim).setZero();
        }
        if (!config_.train_lengthscales) {
            mask.segment(nb * e_dim, e_dim).setZero();
        }
    }
    return mask;
}

Vector Policy::initial_params(const PolicyInitInfo& info, const CounterRng& rng) const {
    const Eigen::Index e_dim = input_dim();
    const Eigen::Index f_dim = config_.action_dim;
    Vector theta = Vector::Zero(param_count());
    if (config_.kind == PolicyKind::linear) {
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            theta[k] = info.weight_std * rng.normal(Stream::misc, 0x9011u, static_cast<std::uint32_t>(k), 0);
        }
        return theta;
    }

    require(info.input_low.size() == e_dim && info.input_high.size() == e_dim, "policy_init: input range dimension mismatch");
    require(info.initial_mean.size() == config_.state_dim && info.initial_std.size() == config_.state_dim,
            "policy_init: initial distribution dimension mismatch");
    const Eigen::Index nb = config_.basis_count;
    const auto n_initial = static_cast<Eigen::Index>(std::lround(info.initial_region_fraction * static_cast<double>(nb)));
    for (Eigen::Index b = 0; b < nb; ++b) {
        const auto bb = static_cast<std::uint32_t>(b);
        Vector z(e_dim);
        if (b < n_initial) {
            Vector x(config_.state_dim);
            for (Eigen::Index d = 0; d < x.size(); ++d) {
                x[d] = info.initial_mean[d] +
                       2.0 * info.initial_std[d] * rng.normal(Stream::misc, 0xce01u, bb, static_cast<std::uint32_t>(d));
            }
            z = augment(x);
        } else {
            for (Eigen::Index e = 0; e < e_dim; ++e) {
                const double u = rng.uniform(Stream::misc, 0xce02u, bb, static_cast<std::uint32_t>(e));
                z[e] = info.input_low[e] + u * (info.input_high[e] - info.input_low[e]);
            }
            if (config_.angle_index >= 0) {
                const double angle = 2.0 * std::numbers::pi * rng.uniform(Stream::misc, 0xce03u, bb, 0) - std::numbers::pi;
                z[config_.angle_index] = std::sin(angle);
                z[config_.angle_index + 1] = std::cos(angle);
            }
        }
        theta.segment(b * e_dim, e_dim) = z;
    }
    theta.segment(nb * e_dim, e_dim) = ((info.input_high - info.input_low) / 5.0).array().log();
    for (Eigen::Index k = 0; k < nb * f_dim; ++k) {
        theta[nb * e_dim + e_dim + k] = info.weight_std * rng.normal(Stream::misc, 0xce04u, static_cast<std::uint32_t>(k), 0);
    }
    return theta;
}

Vector policy_eval(const Policy& policy, const Vector& theta, const Vector& x) {
    require(x.allFinite(), "policy_eval: non-finite state");
    return policy.act(theta, x);
}

PolicyJacobians policy_jacobians(const Policy& policy, const Vector& theta, const Vector& x) {
    PolicyJacobians j;
    policy.act(theta, x, &j.du_dx, &j.du_dtheta);
    return j;
}

PolicyParams policy_init(const PolicyConfig& config, const CounterRng& rng, const PolicyInitInfo& info) {
    const Policy policy(config);
    return PolicyParams{config, policy.initial_params(info, rng)};
}

PolicyInitInfo cartpole_policy_init_info(const Vector& initial_mean, const Vector& initial_std) {
    PolicyInitInfo info;
    info.initial_mean = initial_mean;
    info.initial_std = initial_std;
    // [s, sin b, cos b, s_dot, b_dot]
    info.input_low = (Vector(5) << -2.5, -1.0, -1.0, -5.0, -10.0).finished();
    info.input_high = (Vector(5) << 2.5, 1.0, 1.0, 5.0, 10.0).finished();
    return info;
}

nlohmann::json PolicyParams::to_json() const {
    nlohmann::json j;
    j["kind"] = "policy";
    j["policy_kind"] = to_string(config.kind);
    j["state_dim"] = config.state_dim;
    j["action_dim"] = config.action_dim;
    j["basis_count"] = config.basis_count;
    j["max_action"] = config.max_action;
    j["angle_index"] = config.angle_index;
    j["train_centers"] = config.train_centers;
    j["train_lengthscales"] = config.train_lengthscales;
    j["theta"] = std::vector<double>(theta.data(), theta.data() + theta.size());
    return j;
}

PolicyParams PolicyParams::from_json(const nlohmann::json& j) {
    if (j.value("kind", "") != "policy") {
        throw ContractError("PolicyParams::from_json: not a policy document");
    }
    PolicyParams p;
    p.config.kind = policy_kind_from_string(j.at("policy_kind").get<std::string>());
    p.config.state_dim = j.at("state_dim").get<Eigen::Index>();
    p.config.action_dim = j.at("action_dim").get<Eigen::Index>();
    p.config.basis_count = j.at("basis_count").get<Eigen::Index>();
    p.config.max_action = j.at("max_action").get<double>();
    p.config.angle_index = j.at("angle_index").get<Eigen::Index>();
    p.config.train_centers = j.value("train_centers", true);
    p.config.train_lengthscales = j.value("train_lengthscales", true);
    const auto theta = j.at("theta").get<std::vector<double>>();
    p.theta = Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    require(p.theta.size() == Policy(p.config).param_count(), "PolicyParams::from_json: theta size does not match shape");
    return p;
}

}  // namespace pipps
