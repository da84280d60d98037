#include "pipps/cholesky_grad.hpp"

namespace pipps {

Matrix phi_lower(const Matrix& a) {
    Matrix out = a.triangularView<Eigen::StrictlyLower>();
    out.diagonal() = 0.5 * a.diagonal();
    return out;
}

Matrix chol_tangent(const Matrix& chol, const Matrix& dsigma) {
    require(chol.rows() == chol.cols() && dsigma.rows() == chol.rows() && dsigma.cols() == chol.cols(),
            "chol_tangent: shape mismatch");
    const auto l = chol.triangularView<Eigen::Lower>();
    // X = L^{-1} dS L^{-T}
    Matrix x = l.solve(dsigma);
    x = l.solve(x.transpose()).transpose();
    return chol * phi_lower(x);
}

Matrix chol_adjoint(const Matrix& chol, const Matrix& chol_bar) {
    require(chol.rows() == chol.cols() && chol_bar.rows() == chol.rows() && chol_bar.cols() == chol.cols(),
            "chol_adjoint: shape mismatch");
    const auto l = chol.triangularView<Eigen::Lower>();
    const Matrix lbar = chol_bar.triangularView<Eigen::Lower>();
    const Matrix p = phi_lower(chol.transpose() * lbar);
    Matrix s = 0.5 * (p + p.transpose());
    // G = L^{-T} S L^{-1}
    Matrix g = l.transpose().solve(s);
    g = l.transpose().solve(g.transpose()).transpose();
    return 0.5 * (g + g.transpose());
}

JitteredCholesky robust_cholesky(const Matrix& sigma, Flags* flags) {
    require(sigma.rows() == sigma.cols(), "robust_cholesky: matrix must be square");
    const Eigen::Index d = sigma.rows();
    JitteredCholesky out;
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all()) {
        out.chol = llt.matrixL();
        return out;
    }
    if (flags != nullptr) {
        flags->raise(Flag::covariance_jitter);
    }
    double scale = sigma.trace() / static_cast<double>(d);
    if (!(scale > 0.0)) {
        scale = 1.0;
    }
    for (double rel = 1e-9; rel <= 1.0; rel *= 10.0) {
        Matrix s = sigma;
        s.diagonal().array() += rel * scale;
        llt.compute(s);
        if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all()) {
            out.chol = llt.matrixL();
            out.jitter = rel * scale;
            return out;
        }
    }
    throw NumericalError("robust_cholesky: covariance not positive definite after maximum jitter");
}

}  // namespace pipps
