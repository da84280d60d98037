#pragma once

#include "pipps/common.hpp"

namespace pipps {

/// Lower triangle with the diagonal halved.
Matrix phi_lower(const Matrix& a);

/// Forward-mode derivative of the Cholesky factor: dL = L phi(L^{-1} dS L^{-T}).
Matrix chol_tangent(const Matrix& chol, const Matrix& dsigma);

/// Reverse-mode: given dF/dL (only its lower triangle is read), returns the
/// symmetric gradient dF/dSigma such that dF = tr(G^T dSigma) for symmetric
/// perturbations dSigma.
Matrix chol_adjoint(const Matrix& chol, const Matrix& chol_bar);

struct JitteredCholesky {
    Matrix chol;
    double jitter = 0.0;  ///< absolute amount added to the diagonal
};

/// Cholesky of a sample covariance, adding 1e-9 * trace / D (escalating x10)
/// to the diagonal when the plain factorization fails. A zero-trace matrix
/// uses a unit scale for the jitter.
JitteredCholesky robust_cholesky(const Matrix& sigma, Flags* flags = nullptr);

}  // namespace pipps
