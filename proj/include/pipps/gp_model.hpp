#pragma once

#include "pipps/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <vector>

namespace pipps {

/// Hyperparameters of one output dimension, held in log space.
///
/// The kernel is k(a, b) = s^2 exp(-(a - b)^T diag(l^2)^{-1} (a - b)) with no
/// factor of 1/2 in the exponent. A lengthscale from the conventional
/// exp(-r^2 / (2 l^2)) form converts as l_conventional = sqrt(2) * l.
struct GpHyperparams {
    Vector log_lengthscales;
    double log_signal_std = 0.0;
    double log_noise_std = 0.0;

    static GpHyperparams from_natural(const Vector& lengthscales, double signal_std, double noise_std);

    Eigen::Index input_dim() const { return log_lengthscales.size(); }
    Vector lengthscales() const { return log_lengthscales.array().exp(); }
    double signal_std() const;
    double noise_std() const;

    /// Packed as [log l_1..E, log s, log sigma_n]; the order used by nlml gradients.
    Vector packed() const;
    static GpHyperparams unpack(const Vector& packed);
};

double kernel_eval(const Vector& a, const Vector& b, const GpHyperparams& h);

struct NlmlResult {
    double value = 0.0;
    Vector gradient;  ///< w.r.t. GpHyperparams::packed()
};

/// Predictive distribution of the state delta at one input.
struct GpPrediction {
    Vector mean;      ///< per-dimension mean delta
    Vector variance;  ///< sigma_f^2(x) + sigma_n^2
    Vector model_variance;  ///< sigma_f^2(x) alone
};

struct GpPredictionGrads {
    Matrix dmean;  ///< D x E
    Matrix dstd;   ///< D x E, derivative of sqrt(sigma_f^2 + sigma_n^2)
};

/// Batched prediction used by the rollout. Columns index query points.
struct GpBatchPrediction {
    Matrix mean;            ///< D x P
    Matrix model_variance;  ///< D x P, sigma_f^2 clamped at zero
    /// Per query point, D x E input Jacobians of mean and of sigma_f^2.
    std::vector<Matrix> dmean;
    std::vector<Matrix> dmodel_variance;
};

struct GpTrainOptions {
    int restarts = 3;
    int max_iterations = 200;
    double gradient_tolerance = 1e-6;
    /// Lower bound on sigma_n relative to the target standard deviation.
    double min_noise_ratio = 1e-4;
    std::uint64_t seed = 0;
};

/// One independent GP per output dimension, regressing state deltas on
/// [state, action] inputs. Gram factorizations are cached per dimension and
/// rebuilt only when hyperparameters or data change; all const methods are
/// safe to call concurrently.
class GpModel {
public:
    static constexpr double kJitterStart = 1e-8;
    static constexpr double kJitterMax = 1e-4;
    static constexpr double kVarianceFloor = 1e-12;

    GpModel(Matrix inputs, Matrix targets);
    GpModel(Matrix inputs, Matrix targets, std::vector<GpHyperparams> hyperparams);

    Eigen::Index size() const { return inputs_.rows(); }
    Eigen::Index input_dim() const { return inputs_.cols(); }
    Eigen::Index output_dim() const { return targets_.cols(); }

    const Matrix& inputs() const { return inputs_; }
    const Matrix& targets() const { return targets_; }
    const GpHyperparams& hyperparams(Eigen::Index dim) const { return dims_[dim].hyp; }
    /// Relative jitter (multiple of s^2) that made the Gram matrix factorize.
    double jitter(Eigen::Index dim) const { return dims_[dim].jitter; }

    void set_hyperparams(Eigen::Index dim, const GpHyperparams& h);

    /// Heuristic starting point: lengthscales = input std, s = target std,
    /// sigma_n = 0.1 target std.
    static GpHyperparams default_hyperparams(const Matrix& inputs, const Vector& targets);

    GpPrediction predict(const Vector& x) const;
    GpPredictionGrads predict_grads(const Vector& x, Flags* flags = nullptr) const;
    /// inputs: E x P.
    GpBatchPrediction predict_batch(const Matrix& inputs, bool with_grads) const;

    std::size_t factorization_count() const { return factorizations_; }

    nlohmann::json to_json() const;
    static GpModel from_json(const nlohmann::json& j);

private:
    struct DimCache {
        GpHyperparams hyp;
        double jitter = 0.0;
        Matrix chol;      // lower Cholesky factor of K + (sigma_n^2 + jitter s^2) I
        Vector alpha;     // K^{-1} y
        Matrix inverse;   // K^{-1}
    };

    void factorize(Eigen::Index dim);
    void predict_block(const Matrix& x, Eigen::Index first, Eigen::Index count, bool with_grads,
                       GpBatchPrediction& out) const;

    Matrix inputs_;
    Matrix targets_;
    std::vector<DimCache> dims_;
    std::size_t factorizations_ = 0;
};

/// Negative log marginal likelihood of one output dimension at hyperparameters h,
/// with its exact gradient in log space.
NlmlResult nlml(const Matrix& inputs, const Vector& targets, const GpHyperparams& h);
NlmlResult nlml(const GpModel& model, Eigen::Index dim);

/// Multi-restart L-BFGS on the log-space nlml; best restart per dimension wins.
/// A dimension where every restart fails keeps its initial hyperparameters and
/// raises Flag::training_diverged.
GpModel train_hyperparams(const GpModel& model, const GpTrainOptions& options, Flags* flags = nullptr);

}  // namespace pipps
