#include "pipps/cholesky_grad.hpp"
#include "pipps/rng.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace pipps;

using oracles::random_spd;
using oracles::random_sym;

TEST_CASE("scalar Cholesky derivative") {
    const double v = 2.3;
    const Matrix dl = chol_tangent(Matrix::Constant(1, 1, std::sqrt(v)), Matrix::Ones(1, 1));
    CHECK(dl(0, 0) == doctest::Approx(1.0 / (2.0 * std::sqrt(v))).epsilon(1e-15));
}

TEST_CASE("identity covariance with identity perturbation") {
    const Matrix dl = chol_tangent(Matrix::Identity(3, 3), Matrix::Identity(3, 3));
    CHECK(dl.isApprox(0.5 * Matrix::Identity(3, 3), 1e-15));
}

TEST_CASE("tangent and adjoint match finite differences on 100 random SPD matrices") {
    const oracles::TangentAdjoint worst = oracles::cholesky_derivatives(100);
    CHECK(worst.tangent < 1e-6);
    CHECK(worst.adjoint < 1e-6);
}

TEST_CASE("adjoint is consistent with the tangent") {
    const CounterRng rng(2);
    for (std::uint32_t i = 0; i < 50; ++i) {
        const Matrix sigma = random_spd(4, rng, 3 * i);
        const Matrix ds = random_sym(4, rng, 3 * i + 1);
        Matrix lbar = random_spd(4, rng, 3 * i + 2);
        lbar = lbar.triangularView<Eigen::Lower>();
        const Matrix l = sigma.llt().matrixL();
        const Matrix sbar = chol_adjoint(l, lbar);
        CHECK((sbar - sbar.transpose()).norm() < 1e-12);
        const double lhs = (sbar.array() * ds.array()).sum();
        const double rhs = (lbar.array() * chol_tangent(l, ds).array()).sum();
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("robust Cholesky jitters degenerate covariances") {
    Flags flags;
    const JitteredCholesky ok = robust_cholesky(Matrix::Identity(2, 2), &flags);
    CHECK(ok.jitter == 0.0);
    CHECK_FALSE(flags.any());
    const JitteredCholesky zero = robust_cholesky(Matrix::Zero(3, 3), &flags);
    CHECK(zero.jitter > 0.0);
    CHECK(flags.has(Flag::covariance_jitter));
    const Matrix rank_one = Eigen::Vector3d(1.0, 2.0, 3.0) * Eigen::RowVector3d(1.0, 2.0, 3.0);
    const JitteredCholesky r = robust_cholesky(rank_one);
    // 1e-9 trace / D escalated by powers of ten
    const double steps = std::log10(r.jitter / (1e-9 * rank_one.trace() / 3.0));
    CHECK(std::abs(steps - std::round(steps)) < 1e-9);
    CHECK((r.chol * r.chol.transpose() - rank_one).norm() <= 10.0 * r.jitter);
}
