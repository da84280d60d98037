#include "pipps/gp_model.hpp"

#include "pipps/lbfgs.hpp"
#include "pipps/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace pipps {

namespace {

constexpr Eigen::Index kPredictBlock = 64;

double sample_std(const Vector& v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

// Squared scaled distances between rows of a and rows of b, summed over inputs.
Matrix scaled_sqdist(const Matrix& a, const Matrix& b, const Vector& inv_l2) {
    Matrix out = Matrix::Zero(a.rows(), b.rows());
    for (Eigen::Index e = 0; e < a.cols(); ++e) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            out.col(j).array() += (a.col(e).array() - b(j, e)).square() * inv_l2[e];
        }
    }
    return out;
}

// Cholesky of K_f + (sigma_n^2 + jitter * s^2) I with escalating jitter.
// Returns the relative jitter used, or a negative value if nothing worked.
double factorize_gram(const Matrix& kf, double s2, double sn2, Eigen::LLT<Matrix>& llt) {
    for (double jitter = GpModel::kJitterStart; jitter <= GpModel::kJitterMax * 1.0001; jitter *= 10.0) {
        Matrix k = kf;
        k.diagonal().array() += sn2 + jitter * s2;
        llt.compute(k);
        if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) {
            return jitter;
        }
    }
    return -1.0;
}

}  // namespace

GpHyperparams GpHyperparams::from_natural(const Vector& lengthscales, double signal_std, double noise_std) {
    require((lengthscales.array() > 0.0).all() && signal_std > 0.0 && noise_std > 0.0,
            "GpHyperparams: values must be strictly positive");
    GpHyperparams h;
    h.log_lengthscales = lengthscales.array().log();
    h.log_signal_std = std::log(signal_std);
    h.log_noise_std = std::log(noise_std);
    return h;
}

double GpHyperparams::signal_std() const { return std::exp(log_signal_std); }
double GpHyperparams::noise_std() const { return std::exp(log_noise_std); }

Vector GpHyperparams::packed() const {
    Vector p(log_lengthscales.size() + 2);
    p << log_lengthscales, log_signal_std, log_noise_std;
    return p;
}

GpHyperparams GpHyperparams::unpack(const Vector& packed) {
    require(packed.size() >= 3, "GpHyperparams::unpack: need at least one lengthscale");
    GpHyperparams h;
    const Eigen::Index e = packed.size() - 2;
    h.log_lengthscales = packed.head(e);
    h.log_signal_std = packed[e];
    h.log_noise_std = packed[e + 1];
    return h;
}

double kernel_eval(const Vector& a, const Vector& b, const GpHyperparams& h) {
    require(a.size() == b.size() && a.size() == h.input_dim(), "kernel_eval: dimension mismatch");
    const Vector scaled = (a - b).cwiseQuotient(h.lengthscales());
    const double s = h.signal_std();
    return s * s * std::exp(-scaled.squaredNorm());
}

NlmlResult nlml(const Matrix& inputs, const Vector& targets, const GpHyperparams& h) {
    require(inputs.rows() >= 1, "nlml: need at least one training point");
    require(inputs.rows() == targets.size() && inputs.cols() == h.input_dim(), "nlml: dimension mismatch");

    const Eigen::Index n = inputs.rows();
    const Eigen::Index e_dim = inputs.cols();
    const double s2 = std::exp(2.0 * h.log_signal_std);
    const double sn2 = std::exp(2.0 * h.log_noise_std);
    const Vector inv_l2 = (-2.0 * h.log_lengthscales).array().exp();

    const Matrix kf = s2 * (-scaled_sqdist(inputs, inputs, inv_l2)).array().exp().matrix();
    Eigen::LLT<Matrix> llt;
    const double jitter = factorize_gram(kf, s2, sn2, llt);
    if (jitter < 0.0) {
        throw NumericalError("nlml: Gram matrix not positive definite after maximum jitter (ill-conditioned data)");
    }

    const Vector alpha = llt.solve(targets);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();

    NlmlResult out;
    out.value = 0.5 * targets.dot(alpha) + 0.5 * log_det + 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

    // d nlml / d p = 1/2 tr((K^{-1} - alpha alpha^T) dK/dp)
    Matrix q = llt.solve(Matrix::Identity(n, n));
    q.noalias() -= alpha * alpha.transpose();
    const Matrix qk = q.cwiseProduct(kf);

    out.gradient.resize(e_dim + 2);
    for (Eigen::Index e = 0; e < e_dim; ++e) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            acc += (qk.col(j).array() * (inputs.col(e).array() - inputs(j, e)).square()).sum();
        }
        out.gradient[e] = acc * inv_l2[e];
    }
    out.gradient[e_dim] = qk.sum() + jitter * s2 * q.trace();
    out.gradient[e_dim + 1] = sn2 * q.trace();
    return out;
}

GpModel::GpModel(Matrix inputs, Matrix targets) : inputs_(std::move(inputs)), targets_(std::move(targets)) {
    require(inputs_.rows() == targets_.rows(), "GpModel: inputs and targets row counts differ");
    require(inputs_.rows() >= 1 && inputs_.cols() >= 1 && targets_.cols() >= 1, "GpModel: empty training set");
    dims_.resize(targets_.cols());
    for (Eigen::Index a = 0; a < targets_.cols(); ++a) {
        dims_[a].hyp = default_hyperparams(inputs_, targets_.col(a));
        factorize(a);
    }
}

GpModel::GpModel(Matrix inputs, Matrix targets, std::vector<GpHyperparams> hyperparams)
    : inputs_(std::move(inputs)), targets_(std::move(targets)) {
    require(inputs_.rows() == targets_.rows(), "GpModel: inputs and targets row counts differ");
    require(inputs_.rows() >= 1, "GpModel: empty training set");
    require(static_cast<Eigen::Index>(hyperparams.size()) == targets_.cols(), "GpModel: one hyperparameter set per output");
    dims_.resize(targets_.cols());
    for (Eigen::Index a = 0; a < targets_.cols(); ++a) {
        require(hyperparams[a].input_dim() == inputs_.cols(), "GpModel: lengthscale count mismatch");
        dims_[a].hyp = std::move(hyperparams[a]);
        factorize(a);
    }
}

GpHyperparams GpModel::default_hyperparams(const Matrix& inputs, const Vector& targets) {
    Vector l(inputs.cols());
    for (Eigen::Index e = 0; e < inputs.cols(); ++e) {
        const double sd = sample_std(inputs.col(e));
        l[e] = sd > 0.0 ? sd : 1.0;
    }
    double ts = sample_std(targets);
    if (!(ts > 0.0)) {
        ts = std::max(targets.cwiseAbs().maxCoeff(), 1.0);
    }
    return GpHyperparams::from_natural(l, ts, 0.1 * ts);
}

void GpModel::set_hyperparams(Eigen::Index dim, const GpHyperparams& h) {
    require(dim >= 0 && dim < output_dim(), "GpModel::set_hyperparams: bad dimension");
    require(h.input_dim() == input_dim(), "GpModel::set_hyperparams: lengthscale count mismatch");
    dims_[dim].hyp = h;
    factorize(dim);
}

void GpModel::factorize(Eigen::Index dim) {
    DimCache& c = dims_[dim];
    const double s2 = std::exp(2.0 * c.hyp.log_signal_std);
    const double sn2 = std::exp(2.0 * c.hyp.log_noise_std);
    const Vector inv_l2 = (-2.0 * c.hyp.log_lengthscales).array().exp();
    const Matrix kf = s2 * (-scaled_sqdist(inputs_, inputs_, inv_l2)).array().exp().matrix();

    Eigen::LLT<Matrix> llt;
    const double jitter = factorize_gram(kf, s2, sn2, llt);
    if (jitter < 0.0) {
        throw NumericalError("GpModel: Gram matrix not positive definite after maximum jitter (ill-conditioned data)");
    }
    ++factorizations_;
    c.jitter = jitter;
    c.chol = llt.matrixL();
    c.alpha = llt.solve(targets_.col(dim));
    c.inverse = llt.solve(Matrix::Identity(size(), size()));
}

void GpModel::predict_block(const Matrix& x, Eigen::Index first, Eigen::Index count, bool with_grads,
                            GpBatchPrediction& out) const {
    const Eigen::Index n = size();
    const Eigen::Index e_dim = input_dim();
    const auto xb = x.middleCols(first, count);

    for (Eigen::Index a = 0; a < output_dim(); ++a) {
        const DimCache& c = dims_[a];
        const double s2 = std::exp(2.0 * c.hyp.log_signal_std);
        const Vector inv_l2 = (-2.0 * c.hyp.log_lengthscales).array().exp();

        Matrix kx = Matrix::Zero(n, count);  // N x B
        for (Eigen::Index e = 0; e < e_dim; ++e) {
            for (Eigen::Index p = 0; p < count; ++p) {
                kx.col(p).array() += (inputs_.col(e).array() - xb(e, p)).square() * inv_l2[e];
            }
        }
        kx = s2 * (-kx.array()).exp();

        const Vector mean = kx.transpose() * c.alpha;
        // k^T K^-1 k as |L^-1 k|^2: far less rounding noise than the explicit inverse
        const Matrix v = c.chol.triangularView<Eigen::Lower>().solve(kx);
        const Vector quad = v.colwise().squaredNorm().transpose();

        for (Eigen::Index p = 0; p < count; ++p) {
            out.mean(a, first + p) = mean[p];
            out.model_variance(a, first + p) = std::max(s2 - quad[p], 0.0);
        }

        if (with_grads) {
            Matrix b(n, count);
            b.noalias() = c.inverse * kx;
            const Matrix w = b.cwiseProduct(kx);
            const Vector wsum = w.colwise().sum().transpose();
            // d mean/dx_e = -2/l_e^2 (x_e m - sum_n alpha_n k_n X_ne)
            // d var_f/dx_e = 4/l_e^2 (x_e sum_n W_n - sum_n W_n X_ne)
            const Matrix ak = kx.transpose() * (inputs_.array().colwise() * c.alpha.array()).matrix();  // B x E
            const Matrix wx = w.transpose() * inputs_;  // B x E
            for (Eigen::Index p = 0; p < count; ++p) {
                const bool clamped = s2 - quad[p] <= 0.0;
                Matrix& dm = out.dmean[first + p];
                Matrix& dv = out.dmodel_variance[first + p];
                for (Eigen::Index e = 0; e < e_dim; ++e) {
                    dm(a, e) = -2.0 * inv_l2[e] * (xb(e, p) * mean[p] - ak(p, e));
                    dv(a, e) = clamped ? 0.0 : 4.0 * inv_l2[e] * (xb(e, p) * wsum[p] - wx(p, e));
                }
            }
        }
    }
}

GpBatchPrediction GpModel::predict_batch(const Matrix& inputs, bool with_grads) const {
    require(inputs.rows() == input_dim(), "GpModel::predict_batch: input dimension mismatch");
    const Eigen::Index count = inputs.cols();
    GpBatchPrediction out;
    out.mean.resize(output_dim(), count);
    out.model_variance.resize(output_dim(), count);
    if (with_grads) {
        out.dmean.assign(count, Matrix::Zero(output_dim(), input_dim()));
        out.dmodel_variance.assign(count, Matrix::Zero(output_dim(), input_dim()));
    }
    // Fixed block width keeps every column's arithmetic identical no matter
    // how many points are queried together.
    for (Eigen::Index first = 0; first < count; first += kPredictBlock) {
        predict_block(inputs, first, std::min(kPredictBlock, count - first), with_grads, out);
    }
    return out;
}

GpPrediction GpModel::predict(const Vector& x) const {
    require(x.size() == input_dim(), "GpModel::predict: input dimension mismatch");
    const GpBatchPrediction b = predict_batch(x, false);
    GpPrediction out;
    out.mean = b.mean.col(0);
    out.model_variance = b.model_variance.col(0);
    out.variance = out.model_variance;
    for (Eigen::Index a = 0; a < output_dim(); ++a) {
        out.variance[a] += std::exp(2.0 * dims_[a].hyp.log_noise_std);
    }
    return out;
}

GpPredictionGrads GpModel::predict_grads(const Vector& x, Flags* flags) const {
    require(x.size() == input_dim(), "GpModel::predict_grads: input dimension mismatch");
    const GpBatchPrediction b = predict_batch(x, true);
    GpPredictionGrads out;
    out.dmean = b.dmean[0];
    out.dstd.resize(output_dim(), input_dim());
    for (Eigen::Index a = 0; a < output_dim(); ++a) {
        const double var = b.model_variance(a, 0) + std::exp(2.0 * dims_[a].hyp.log_noise_std);
        if (var < kVarianceFloor) {
            if (flags != nullptr) {
                flags->raise(Flag::variance_floor_clamped);
            }
            out.dstd.row(a).setZero();
        } else {
            out.dstd.row(a) = b.dmodel_variance[0].row(a) / (2.0 * std::sqrt(var));
        }
    }
    return out;
}

NlmlResult nlml(const GpModel& model, Eigen::Index dim) {
    require(dim >= 0 && dim < model.output_dim(), "nlml: bad output dimension");
    return nlml(model.inputs(), model.targets().col(dim), model.hyperparams(dim));
}

GpModel train_hyperparams(const GpModel& model, const GpTrainOptions& options, Flags* flags) {
    require(model.size() >= 1, "train_hyperparams: empty training set");
    require(options.restarts >= 1, "train_hyperparams: need at least one restart");

    const Matrix& x = model.inputs();
    const Eigen::Index e_dim = model.input_dim();
    std::vector<GpHyperparams> best(model.output_dim());
    const CounterRng rng(options.seed);

    for (Eigen::Index a = 0; a < model.output_dim(); ++a) {
        const Vector y = model.targets().col(a);
        const GpHyperparams init = GpModel::default_hyperparams(x, y);
        const Vector p0 = init.packed();

        // Bounds in log space around the data scales.
        const double log_ts = init.log_signal_std;
        Vector lower(e_dim + 2);
        Vector upper(e_dim + 2);
        lower.head(e_dim) = init.log_lengthscales.array() - std::log(1e3);
        upper.head(e_dim) = init.log_lengthscales.array() + std::log(1e3);
        lower[e_dim] = log_ts - std::log(1e6);
        upper[e_dim] = log_ts + std::log(1e4);
        lower[e_dim + 1] = log_ts + std::log(options.min_noise_ratio);
        upper[e_dim + 1] = log_ts + std::log(1e2);

        const Objective objective = [&](const Vector& p, Vector& g) {
            try {
                NlmlResult r = nlml(x, y, GpHyperparams::unpack(p));
                g = r.gradient;
                return r.value;
            } catch (const NumericalError&) {
                g.setConstant(p.size(), std::numeric_limits<double>::quiet_NaN());
                return std::numeric_limits<double>::infinity();
            }
        };

        LbfgsOptions lopts;
        lopts.max_iterations = options.max_iterations;
        lopts.gradient_tolerance = options.gradient_tolerance;

        double best_value = std::numeric_limits<double>::infinity();
        Vector best_p = p0;
        for (int r = 0; r < options.restarts; ++r) {
            Vector start = p0;
            if (r == 1) {
                start.array() += 1.0;
            } else if (r == 2) {
                start.array() -= 1.0;
            } else if (r > 2) {
                for (Eigen::Index k = 0; k < start.size(); ++k) {
                    const double u = rng.uniform(Stream::misc, static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(r),
                                                 static_cast<std::uint32_t>(k));
                    start[k] += u < 0.5 ? -1.0 : 1.0;
                }
            }
            const LbfgsResult res = minimize_lbfgs_box(objective, start, lower, upper, lopts);
            if (!res.failed && std::isfinite(res.value) && res.value < best_value) {
                best_value = res.value;
                best_p = res.x;
            }
        }
        if (!std::isfinite(best_value)) {
            if (flags != nullptr) {
                flags->raise(Flag::training_diverged);
            }
            best[a] = init;
        } else {
            best[a] = GpHyperparams::unpack(best_p);
        }
    }

    GpModel trained(x, model.targets(), std::move(best));
    for (Eigen::Index a = 0; a < trained.output_dim(); ++a) {
        if (trained.jitter(a) > GpModel::kJitterStart && flags != nullptr) {
            flags->raise(Flag::gram_jitter_escalated);
        }
    }
    return trained;
}

nlohmann::json GpModel::to_json() const {
    nlohmann::json j;
    j["kind"] = "gp_model";
    j["input_dim"] = input_dim();
    j["output_dim"] = output_dim();
    j["size"] = size();
    j["inputs"] = std::vector<double>(inputs_.data(), inputs_.data() + inputs_.size());
    j["targets"] = std::vector<double>(targets_.data(), targets_.data() + targets_.size());
    nlohmann::json dims = nlohmann::json::array();
    for (const DimCache& c : dims_) {
        const Vector l = c.hyp.log_lengthscales;
        dims.push_back({{"log_lengthscales", std::vector<double>(l.data(), l.data() + l.size())},
                        {"log_signal_std", c.hyp.log_signal_std},
                        {"log_noise_std", c.hyp.log_noise_std},
                        {"jitter", c.jitter}});
    }
    j["hyperparams"] = dims;
    return j;
}

GpModel GpModel::from_json(const nlohmann::json& j) {
    if (j.value("kind", "") != "gp_model") {
        throw ContractError("GpModel::from_json: not a gp_model document");
    }
    const auto n = j.at("size").get<Eigen::Index>();
    const auto e = j.at("input_dim").get<Eigen::Index>();
    const auto d = j.at("output_dim").get<Eigen::Index>();
    const auto xs = j.at("inputs").get<std::vector<double>>();
    const auto ys = j.at("targets").get<std::vector<double>>();
    require(static_cast<Eigen::Index>(xs.size()) == n * e && static_cast<Eigen::Index>(ys.size()) == n * d,
            "GpModel::from_json: array sizes do not match shapes");
    Matrix x = Eigen::Map<const Matrix>(xs.data(), n, e);
    Matrix y = Eigen::Map<const Matrix>(ys.data(), n, d);
    std::vector<GpHyperparams> hyp;
    for (const auto& dj : j.at("hyperparams")) {
        GpHyperparams h;
        const auto l = dj.at("log_lengthscales").get<std::vector<double>>();
        h.log_lengthscales = Eigen::Map<const Vector>(l.data(), static_cast<Eigen::Index>(l.size()));
        h.log_signal_std = dj.at("log_signal_std").get<double>();
        h.log_noise_std = dj.at("log_noise_std").get<double>();
        hyp.push_back(std::move(h));
    }
    return GpModel(std::move(x), std::move(y), std::move(hyp));
}

}  // namespace pipps
