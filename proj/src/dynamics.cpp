#include "pipps/dynamics.hpp"

#include <cmath>

namespace pipps {

TransitionBatch make_transition_batch(Eigen::Index d, Eigen::Index f, Eigen::Index p, bool with_grads) {
    TransitionBatch b;
    b.mean.resize(d, p);
    b.std.resize(d, p);
    if (with_grads) {
        b.dmean_dx.assign(p, Matrix::Zero(d, d));
        b.dmean_du.assign(p, Matrix::Zero(d, f));
        b.dstd_dx.assign(p, Matrix::Zero(d, d));
        b.dstd_du.assign(p, Matrix::Zero(d, f));
    }
    return b;
}

GpDynamics::GpDynamics(const GpModel& model, Eigen::Index action_dim, bool drop_model_uncertainty,
                       double noise_multiplier)
    : model_(model),
      action_dim_(action_dim),
      drop_model_uncertainty_(drop_model_uncertainty),
      noise_multiplier_(noise_multiplier) {
    require(model.input_dim() == model.output_dim() + action_dim, "GpDynamics: GP inputs must be [state, action]");
    require(noise_multiplier >= 0.0, "GpDynamics: noise multiplier must be non-negative");
}

void GpDynamics::predict(const Matrix& states, const Matrix& actions, Eigen::Index begin, Eigen::Index end,
                         bool with_grads, TransitionBatch& out, Flags& flags) const {
    const Eigen::Index d = state_dim();
    const Eigen::Index count = end - begin;
    Matrix inputs(d + action_dim_, count);
    inputs.topRows(d) = states.middleCols(begin, count);
    inputs.bottomRows(action_dim_) = actions.middleCols(begin, count);
    const GpBatchPrediction pred = model_.predict_batch(inputs, with_grads);

    Vector noise_var(d);
    for (Eigen::Index a = 0; a < d; ++a) {
        const double sn = model_.hyperparams(a).noise_std();
        noise_var[a] = noise_multiplier_ * (sn * sn);
    }

    for (Eigen::Index p = 0; p < count; ++p) {
        const Eigen::Index col = begin + p;
        out.mean.col(col) = states.col(col) + pred.mean.col(p);
        Vector var = noise_var;
        if (!drop_model_uncertainty_) {
            var += pred.model_variance.col(p);
        }
        Vector dscale(d);  // d std / d var
        for (Eigen::Index a = 0; a < d; ++a) {
            if (!(var[a] >= GpModel::kVarianceFloor)) {
                flags.raise(Flag::variance_floor_clamped);
                var[a] = GpModel::kVarianceFloor;
                dscale[a] = 0.0;
            } else {
                dscale[a] = 0.5 / std::sqrt(var[a]);
            }
        }
        out.std.col(col) = var.cwiseSqrt();
        if (with_grads) {
            const Matrix& dm = pred.dmean[p];
            out.dmean_dx[col] = dm.leftCols(d);
            out.dmean_dx[col].diagonal().array() += 1.0;
            out.dmean_du[col] = dm.rightCols(action_dim_);
            if (drop_model_uncertainty_) {
                out.dstd_dx[col].setZero(d, d);
                out.dstd_du[col].setZero(d, action_dim_);
            } else {
                const Matrix& dv = pred.dmodel_variance[p];
                out.dstd_dx[col] = dscale.asDiagonal() * dv.leftCols(d);
                out.dstd_du[col] = dscale.asDiagonal() * dv.rightCols(action_dim_);
            }
        }
    }
}

}  // namespace pipps
