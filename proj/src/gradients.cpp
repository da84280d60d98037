#include "pipps/gradients.hpp"

#include "pipps/cholesky_grad.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

namespace pipps {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Blend { rp_only, lr_only, inverse_variance };

// Per-coordinate sample variance across columns, divided by the column count.
Vector variance_of_mean(const Matrix& g) {
    const Eigen::Index p = g.cols();
    if (p < 2) {
        return Vector::Zero(g.rows());
    }
    const Vector mean = g.rowwise().mean();
    const Vector var = (g.colwise() - mean).array().square().rowwise().sum() / static_cast<double>(p - 1);
    return var / static_cast<double>(p);
}

double trace_variance(const Matrix& g, const Vector* mask) {
    if (!g.allFinite()) {
        return kInf;
    }
    const Vector v = variance_of_mean(g);
    return mask != nullptr ? v.dot(*mask) : v.sum();
}

double smoothed(std::vector<double>& store, Eigen::Index t, double value, double decay) {
    if (static_cast<Eigen::Index>(store.size()) <= t) {
        store.resize(t + 1, std::numeric_limits<double>::quiet_NaN());
    }
    double& slot = store[t];
    slot = std::isnan(slot) || !std::isfinite(value) ? value : decay * slot + (1.0 - decay) * value;
    return slot;
}

// dG/dtheta contribution of a distribution-parameter gradient through u_{t-1}.
Vector project_to_theta(const StepJacobians& j, const Eigen::Ref<const Vector>& zeta_grad) {
    return j.du_dtheta.transpose() * (j.zeta_du.transpose() * zeta_grad);
}

void check_tape(const TrajectoryRecord& tape) {
    require(static_cast<Eigen::Index>(tape.jacobians.size()) == tape.horizon,
            "gradient estimator: tape was recorded without Jacobians");
    require(static_cast<Eigen::Index>(tape.states.size()) == tape.horizon + 1, "gradient estimator: malformed tape");
}

void finish(GradEstimate& est, Matrix per_particle) {
    est.per_particle = std::move(per_particle);
    est.mean = est.per_particle.rowwise().mean();
    est.variance = variance_of_mean(est.per_particle);
    if (!est.mean.allFinite() || !est.variance.allFinite()) {
        est.infinite_variance = true;
        est.variance.setConstant(kInf);
        est.flags.raise(Flag::non_finite_gradient);
    }
}

GradEstimate run_backward(const TrajectoryRecord& tape, Blend blend, bool biw, const TpOptions* options,
                          Estimator tag) {
    check_tape(tape);
    const Eigen::Index p = tape.particles;
    const Eigen::Index horizon = tape.horizon;
    const Eigen::Index d = tape.state_dim;
    const Eigen::Index n_theta = tape.param_count;
    require(blend == Blend::rp_only || p >= 2 || biw, "likelihood-ratio estimators need at least two particles");

    const Matrix returns_to_go = tape.returns_to_go();
    const Vector* mask = nullptr;
    if (options != nullptr && options->strategy == VarianceStrategy::parameter_subset) {
        require(options->subset_mask.size() == n_theta, "total_propagation: subset mask size mismatch");
        mask = &options->subset_mask;
    }

    GradEstimate est;
    est.estimator = tag;
    est.flags.merge(tape.flags);
    Matrix per_particle = Matrix::Zero(n_theta, p);
    Matrix dgdz_next = Matrix::Zero(2 * d, p);
    Matrix rp_zeta(2 * d, p);
    Matrix rp_theta(n_theta, p);
    Matrix lr_theta(n_theta, p);

    for (Eigen::Index t = horizon; t >= 1; --t) {
        const std::vector<StepJacobians>& into = tape.jacobians[t - 1];
        const Matrix& eps = tape.eps[t - 1];

        if (blend != Blend::lr_only) {
            for (Eigen::Index i = 0; i < p; ++i) {
                Vector a = tape.cost_grads[t].col(i);
                if (t < horizon) {
                    a.noalias() += tape.jacobians[t][i].zeta_dx.transpose() * dgdz_next.col(i);
                }
                rp_zeta.col(i).head(d) = a;
                rp_zeta.col(i).tail(d) = a.cwiseProduct(eps.col(i));
                rp_theta.col(i) = project_to_theta(into[i], rp_zeta.col(i));
            }
        }

        StepLrTerms lr;
        if (blend != Blend::rp_only) {
            lr = lr_step_terms(tape, t, biw, &returns_to_go, false);
            est.flags.merge(lr.flags);
            for (Eigen::Index i = 0; i < p; ++i) {
                lr_theta.col(i) = project_to_theta(into[i], lr.zeta_grad.col(i));
            }
        }

        TpStep step;
        step.step = t;
        step.var_rp = blend == Blend::lr_only ? kInf : trace_variance(rp_theta, mask);
        step.var_lr = blend == Blend::rp_only ? kInf : trace_variance(lr_theta, mask);
        if (options != nullptr && options->strategy == VarianceStrategy::moving_average && options->memory != nullptr) {
            step.var_rp = smoothed(options->memory->var_rp, t, step.var_rp, options->memory->decay);
            step.var_lr = smoothed(options->memory->var_lr, t, step.var_lr, options->memory->decay);
        }
        switch (blend) {
            case Blend::rp_only:
                step.k_lr = 0.0;
                break;
            case Blend::lr_only:
                step.k_lr = 1.0;
                break;
            case Blend::inverse_variance:
                step.k_lr = inverse_variance_weight(step.var_lr, step.var_rp, &est.flags);
                break;
        }
        const double k = step.k_lr;

        if (k == 0.0) {
            step.mean_rp = rp_theta.rowwise().mean();
            step.mean_lr = Vector::Zero(n_theta);
            step.contribution = step.mean_rp;
            per_particle += rp_theta;
            dgdz_next = rp_zeta;
        } else if (k == 1.0) {
            step.mean_lr = lr_theta.rowwise().mean();
            step.mean_rp = blend == Blend::lr_only ? Vector::Zero(n_theta) : Vector(rp_theta.rowwise().mean());
            step.contribution = step.mean_lr;
            per_particle += lr_theta;
            dgdz_next = lr.zeta_grad;
        } else {
            step.mean_rp = rp_theta.rowwise().mean();
            step.mean_lr = lr_theta.rowwise().mean();
            step.contribution = k * step.mean_lr + (1.0 - k) * step.mean_rp;
            per_particle += k * lr_theta + (1.0 - k) * rp_theta;
            dgdz_next = k * lr.zeta_grad + (1.0 - k) * rp_zeta;
        }
        if (blend == Blend::rp_only && !rp_theta.allFinite()) {
            est.flags.raise(Flag::non_finite_gradient);
        }
        est.steps.push_back(std::move(step));
    }

    finish(est, std::move(per_particle));
    return est;
}

}  // namespace

std::string to_string(Estimator e) {
    switch (e) {
        case Estimator::rp:
            return "rp";
        case Estimator::rp_fs:
            return "rp_fs";
        case Estimator::gr:
            return "gr";
        case Estimator::gr_fs:
            return "gr_fs";
        case Estimator::lr:
            return "lr";
        case Estimator::biw_lr:
            return "biw-lr";
        case Estimator::tp:
            return "tp";
    }
    return "tp";
}

Estimator estimator_from_string(const std::string& s) {
    for (auto e : {Estimator::rp, Estimator::rp_fs, Estimator::gr, Estimator::gr_fs, Estimator::lr, Estimator::biw_lr,
                   Estimator::tp}) {
        if (to_string(e) == s) {
            return e;
        }
    }
    throw ContractError("unknown estimator '" + s + "' (expected rp, rp_fs, gr, gr_fs, lr, biw-lr or tp)");
}

RolloutMode rollout_mode_for(Estimator e) {
    switch (e) {
        case Estimator::rp_fs:
            return RolloutMode::fixed_seed;
        case Estimator::gr:
            return RolloutMode::gaussian_resample;
        case Estimator::gr_fs:
            return RolloutMode::gaussian_resample_fixed_seed;
        default:
            return RolloutMode::plain;
    }
}

double GradEstimate::projected_variance(const Vector& direction) const {
    require(direction.size() == per_particle.rows(), "projected_variance: direction size mismatch");
    const Vector proj = per_particle.transpose() * direction;
    if (proj.size() < 2) {
        return 0.0;
    }
    return (proj.array() - proj.mean()).square().sum() / static_cast<double>(proj.size() - 1);
}

std::vector<double> GradEstimate::k_lr_trace() const {
    std::vector<double> out;
    out.reserve(steps.size());
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        out.push_back(it->k_lr);
    }
    return out;
}

void GradEstimate::write_steps_csv(std::ostream& os) const {
    os << "step,k_lr,var_rp,var_lr\n";
    const auto old_precision = os.precision(17);
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        os << it->step << ',' << it->k_lr << ',' << it->var_rp << ',' << it->var_lr << '\n';
    }
    os.precision(old_precision);
}

Vector gaussian_score(const Vector& x, const Vector& mu, const Vector& sigma) {
    require(x.size() == mu.size() && x.size() == sigma.size(), "gaussian_score: dimension mismatch");
    const Eigen::Index d = x.size();
    Vector out(2 * d);
    for (Eigen::Index k = 0; k < d; ++k) {
        const double z = (x[k] - mu[k]) / sigma[k];
        out[k] = z / sigma[k];
        out[d + k] = (z * z - 1.0) / sigma[k];
    }
    return out;
}

double inverse_variance_weight(double var_lr, double var_rp, Flags* flags) {
    if (std::isnan(var_rp) || var_rp == kInf) {
        return std::isfinite(var_lr) ? 1.0 : 0.5;
    }
    if (std::isnan(var_lr) || var_lr == kInf) {
        return 0.0;
    }
    if (var_lr == 0.0 && var_rp == 0.0) {
        if (flags != nullptr) {
            flags->raise(Flag::degenerate_variance);
        }
        return 0.5;
    }
    return 1.0 / (1.0 + var_lr / var_rp);
}

StepLrTerms lr_step_terms(const TrajectoryRecord& tape, Eigen::Index t, bool biw, const Matrix* returns_to_go,
                          bool keep_pairwise) {
    require(t >= 1 && t <= tape.horizon, "lr_step_terms: step out of range");
    const Eigen::Index p = tape.particles;
    const Eigen::Index d = tape.state_dim;
    Matrix local_g;
    if (returns_to_go == nullptr) {
        local_g = tape.returns_to_go();
        returns_to_go = &local_g;
    }
    const Vector g = returns_to_go->row(t).transpose();
    const Matrix& mu = tape.mean[t - 1];
    const Matrix& sigma = tape.std[t - 1];
    const Matrix& x = tape.states[t];
    const double g_ref = g[0];

    StepLrTerms out;
    out.step = t;
    out.baselines.resize(p);
    out.zeta_grad.resize(2 * d, p);

    if (!biw) {
        // Leave-one-out mean, accumulated relative to a reference return so a
        // constant return gives exactly zero advantage.
        double total = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            total += g[j] - g_ref;
        }
        for (Eigen::Index i = 0; i < p; ++i) {
            if (p < 2) {
                out.baselines[i] = 0.0;
                out.flags.raise(Flag::baseline_fallback);
            } else {
                out.baselines[i] = g_ref + (total - (g[i] - g_ref)) / static_cast<double>(p - 1);
            }
            const double adv = g[i] - out.baselines[i];
            const Eigen::Index j = i;
            for (Eigen::Index k = 0; k < d; ++k) {
                const double e = tape.eps[t - 1](k, j);
                out.zeta_grad(k, i) = adv * e / sigma(k, i);
                out.zeta_grad(d + k, i) = adv * (e * e - 1.0) / sigma(k, i);
            }
        }
        return out;
    }

    // One pass over samples j. Per component i accumulate the leave-one-out
    // weight sums and, relative to G_ref,
    //   A_i = sum_j c_ij (G_j - G_ref) s_ij,  B_i = sum_j c_ij s_ij
    // so that sum_j c_ij (G_j - b_i) s_ij = A_i - (b_i - G_ref) B_i.
    const double log_norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
    const Matrix inv_sigma = sigma.cwiseInverse();
    Vector log_det(p);
    for (Eigen::Index i = 0; i < p; ++i) {
        log_det[i] = sigma.col(i).array().log().sum();
    }
    if (keep_pairwise) {
        out.log_density.resize(p, p);
        out.weights.resize(p, p);
    }
    Vector num = Vector::Zero(p);
    Vector den = Vector::Zero(p);
    Matrix acc_a;
    Matrix acc_b;
    // Particle-major layouts so every per-dimension sweep is contiguous.
    const Eigen::ArrayXd neg_log_det = log_norm - log_det.array();
    const Eigen::ArrayXXd inv = inv_sigma.transpose().array();
    const Eigen::ArrayXXd mu_t = mu.transpose().array();
    Eigen::ArrayXXd acc_a_t = Eigen::ArrayXXd::Zero(p, 2 * d);
    Eigen::ArrayXXd acc_b_t = Eigen::ArrayXXd::Zero(p, 2 * d);
    Eigen::ArrayXXd z(p, d);
    Eigen::ArrayXd logd(p);
    Eigen::ArrayXd c(p);
    Eigen::ArrayXd s(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        logd = neg_log_det;
        for (Eigen::Index k = 0; k < d; ++k) {
            z.col(k) = (x(k, j) - mu_t.col(k)) * inv.col(k);
            logd -= 0.5 * z.col(k).square();
        }
        const double top = logd.maxCoeff();
        if (!std::isfinite(top)) {
            out.flags.raise(Flag::mixture_underflow);
            if (keep_pairwise) {
                out.log_density.col(j) = logd.matrix();
                out.weights.col(j).setZero();
            }
            continue;
        }
        c = (logd - top).exp();
        c /= c.sum();
        if (keep_pairwise) {
            out.log_density.col(j) = logd.matrix();
            out.weights.col(j) = c.matrix();
        }
        const double dj = g[j] - g_ref;
        for (Eigen::Index k = 0; k < d; ++k) {
            s = c * z.col(k) * inv.col(k);
            acc_b_t.col(k) += s;
            if (dj != 0.0) {
                acc_a_t.col(k) += dj * s;
            }
            s = c * (z.col(k).square() - 1.0) * inv.col(k);
            acc_b_t.col(d + k) += s;
            if (dj != 0.0) {
                acc_a_t.col(d + k) += dj * s;
            }
        }
        const double cj = c[j];
        c[j] = 0.0;
        num.array() += dj * c;
        den.array() += c;
        c[j] = cj;
    }
    acc_a = acc_a_t.matrix().transpose();
    acc_b = acc_b_t.matrix().transpose();

    double total = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
        total += g[j] - g_ref;
    }
    for (Eigen::Index i = 0; i < p; ++i) {
        double shift = 0.0;
        if (den[i] > 0.0) {
            shift = num[i] / den[i];
            out.baselines[i] = g_ref + shift;
        } else {
            out.flags.raise(Flag::baseline_fallback);
            if (p < 2) {
                out.baselines[i] = 0.0;
                shift = -g_ref;
            } else {
                shift = (total - (g[i] - g_ref)) / static_cast<double>(p - 1);
                out.baselines[i] = g_ref + shift;
            }
        }
        out.zeta_grad.col(i) = acc_a.col(i) - shift * acc_b.col(i);
    }
    return out;
}

double baseline_biw(const TrajectoryRecord& tape, Eigen::Index t, Eigen::Index i) {
    require(i >= 0 && i < tape.particles, "baseline_biw: particle index out of range");
    return lr_step_terms(tape, t, true, nullptr, false).baselines[i];
}

GradEstimate rp_gradient(const TrajectoryRecord& tape) {
    require(!uses_resampling(tape.mode), "rp_gradient: resampling tapes need gr_rp_gradient");
    return run_backward(tape, Blend::rp_only, false, nullptr,
                        uses_fixed_seed(tape.mode) ? Estimator::rp_fs : Estimator::rp);
}

GradEstimate lr_gradient(const TrajectoryRecord& tape, bool biw) {
    require(!uses_resampling(tape.mode), "lr_gradient: needs a plain or fixed-seed tape");
    return run_backward(tape, Blend::lr_only, biw, nullptr, biw ? Estimator::biw_lr : Estimator::lr);
}

GradEstimate total_propagation(const TrajectoryRecord& tape, const TpOptions& options) {
    require(!uses_resampling(tape.mode), "total_propagation: needs a plain or fixed-seed tape");
    require(tape.particles >= 2, "total_propagation: need at least two particles");
    return run_backward(tape, Blend::inverse_variance, options.biw, &options, Estimator::tp);
}

GradEstimate gr_rp_gradient(const TrajectoryRecord& tape) {
    require(uses_resampling(tape.mode), "gr_rp_gradient: needs a resampling tape");
    check_tape(tape);
    const Eigen::Index p = tape.particles;
    const Eigen::Index horizon = tape.horizon;
    const Eigen::Index d = tape.state_dim;
    const auto pd = static_cast<double>(p);

    GradEstimate est;
    est.estimator = uses_fixed_seed(tape.mode) ? Estimator::gr_fs : Estimator::gr;
    est.flags.merge(tape.flags);
    Matrix per_particle = Matrix::Zero(tape.param_count, p);
    Matrix dgdz_next = Matrix::Zero(2 * d, p);
    Matrix rp_zeta(2 * d, p);
    Matrix rp_theta(tape.param_count, p);

    for (Eigen::Index t = horizon; t >= 1; --t) {
        // Gradient w.r.t. the states the policy and model read at step t.
        Matrix dg_input = Matrix::Zero(d, p);
        if (t < horizon) {
            for (Eigen::Index i = 0; i < p; ++i) {
                dg_input.col(i) = tape.jacobians[t][i].zeta_dx.transpose() * dgdz_next.col(i);
            }
        }
        // Back through x'_i = mean + L z_i into the pre-resampling states.
        Matrix dg_state = dg_input;
        if (t < horizon && tape.batch_chol[t].size() > 0) {
            const Vector& mu_hat = tape.batch_mean[t];
            const Vector dmu = dg_input.rowwise().sum();
            const Matrix lbar = dg_input * tape.resample_draws[t].transpose();
            const Matrix sigma_bar = chol_adjoint(tape.batch_chol[t], lbar);
            const Matrix centered = tape.states[t].colwise() - mu_hat;
            dg_state = (2.0 / (pd - 1.0)) * (sigma_bar * centered);
            dg_state.colwise() += dmu / pd;
        }

        const Matrix& eps = tape.eps[t - 1];
        for (Eigen::Index i = 0; i < p; ++i) {
            const Vector a = tape.cost_grads[t].col(i) + dg_state.col(i);
            rp_zeta.col(i).head(d) = a;
            rp_zeta.col(i).tail(d) = a.cwiseProduct(eps.col(i));
            rp_theta.col(i) = project_to_theta(tape.jacobians[t - 1][i], rp_zeta.col(i));
        }
        TpStep step;
        step.step = t;
        step.k_lr = 0.0;
        step.var_rp = trace_variance(rp_theta, nullptr);
        step.var_lr = kInf;
        step.mean_rp = rp_theta.rowwise().mean();
        step.mean_lr = Vector::Zero(tape.param_count);
        step.contribution = step.mean_rp;
        est.steps.push_back(std::move(step));
        per_particle += rp_theta;
        dgdz_next = rp_zeta;
    }
    finish(est, std::move(per_particle));
    return est;
}

GradEstimate estimate_gradient(Estimator e, const TrajectoryRecord& tape) {
    switch (e) {
        case Estimator::rp:
        case Estimator::rp_fs:
            return rp_gradient(tape);
        case Estimator::gr:
        case Estimator::gr_fs:
            return gr_rp_gradient(tape);
        case Estimator::lr:
            return lr_gradient(tape, false);
        case Estimator::biw_lr:
            return lr_gradient(tape, true);
        case Estimator::tp:
            return total_propagation(tape);
    }
    throw ContractError("estimate_gradient: unknown estimator");
}

}  // namespace pipps
