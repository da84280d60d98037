#include "pipps/gp_model.hpp"
#include "pipps/rng.hpp"
#include "support/oracles.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>

using namespace pipps;

using oracles::random_hyp;
using oracles::random_matrix;
using oracles::random_model;

TEST_CASE("kernel examples") {
    const GpHyperparams h2 = GpHyperparams::from_natural(Vector::Ones(1), 2.0, 0.1);
    const Vector a = Vector::Constant(1, 0.3);
    CHECK(kernel_eval(a, a, h2) == doctest::Approx(4.0).epsilon(1e-15));
    const GpHyperparams h1 = GpHyperparams::from_natural(Vector::Ones(1), 1.0, 0.1);
    CHECK(kernel_eval(Vector::Zero(1), Vector::Ones(1), h1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(kernel_eval(Vector::Zero(1), Vector::Constant(1, 1e3), h1) == 0.0);
    CHECK_THROWS_AS(kernel_eval(Vector::Zero(2), Vector::Zero(1), h1), ContractError);
}

TEST_CASE("packed hyperparameters round-trip") {
    const GpHyperparams h = GpHyperparams::from_natural(Eigen::Vector3d(0.5, 1.0, 2.0), 1.5, 0.2);
    const Vector p = h.packed();
    REQUIRE(p.size() == 5);
    CHECK(p[3] == h.log_signal_std);
    CHECK(p[4] == h.log_noise_std);
    const GpHyperparams back = GpHyperparams::unpack(p);
    CHECK(back.log_lengthscales == h.log_lengthscales);
    CHECK_THROWS_AS(GpHyperparams::from_natural(Vector::Ones(1), -1.0, 0.1), ContractError);
}

TEST_CASE("nlml of a single zero target") {
    const double s = 1.3;
    const double sn = 0.4;
    const GpHyperparams h = GpHyperparams::from_natural(Vector::Ones(2), s, sn);
    const Matrix x = Matrix::Constant(1, 2, 0.7);
    const NlmlResult r = nlml(x, Vector::Zero(1), h);
    // the Gram matrix carries 1e-8 s^2 of jitter
    const double expect = 0.5 * std::log(2.0 * std::numbers::pi * (s * s * (1.0 + 1e-8) + sn * sn));
    CHECK(r.value == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("nlml gradient matches finite differences on 100 random configurations") {
    CHECK(oracles::nlml_gradient(100) < 1e-5);
}

TEST_CASE("nlml changes continuously with the noise level") {
    const CounterRng rng(5);
    const Matrix x = random_matrix(8, 2, rng, 1);
    const Vector y = Vector::Zero(8);
    GpHyperparams h = GpHyperparams::from_natural(Vector::Ones(2), 1.0, 0.1);
    const double a = nlml(x, y, h).value;
    h.log_noise_std += 1e-7;
    CHECK(std::abs(nlml(x, y, h).value - a) < 1e-5);
}

TEST_CASE("prediction far from data reverts to the prior") {
    const GpModel m = random_model(CounterRng(1), 1);
    const GpPrediction p = m.predict(Vector::Constant(3, 1e3));
    for (Eigen::Index a = 0; a < 2; ++a) {
        CHECK(std::abs(p.mean[a]) < 1e-12);
        CHECK(p.model_variance[a] == doctest::Approx(std::pow(m.hyperparams(a).signal_std(), 2)));
    }
    const GpPredictionGrads g = m.predict_grads(Vector::Constant(3, 1e3));
    CHECK(g.dmean.norm() < 1e-12);
}

TEST_CASE("single-point posterior mean") {
    const double s = 1.1;
    const double sn = 0.3;
    const double y = 0.8;
    const Matrix x = Matrix::Constant(1, 2, 0.2);
    const GpModel m(x, Matrix::Constant(1, 1, y), {GpHyperparams::from_natural(Vector::Ones(2), s, sn)});
    const double k = s * s;
    CHECK(m.predict(x.row(0).transpose()).mean[0] == doctest::Approx(y * k / (k + sn * sn)).epsilon(1e-7));
}

TEST_CASE("predictive variance bounds") {
    const GpModel m = random_model(CounterRng(2), 2);
    const CounterRng rng(9);
    for (std::uint32_t q = 0; q < 200; ++q) {
        const Vector x = random_matrix(3, 1, rng, q).col(0);
        const GpPrediction p = m.predict(x);
        for (Eigen::Index a = 0; a < 2; ++a) {
            const double s2 = std::pow(m.hyperparams(a).signal_std(), 2);
            const double n2 = std::pow(m.hyperparams(a).noise_std(), 2);
            CHECK(p.variance[a] >= n2);
            CHECK(p.variance[a] <= s2 + n2 + 1e-12);
        }
    }
}

TEST_CASE("input gradients match finite differences on 100 random configurations") {
    const oracles::MeanStd worst = oracles::gp_input_gradients(100);
    CHECK(worst.mean < 1e-5);
    CHECK(worst.std < 1e-5);
}

TEST_CASE("mean gradient vanishes midway between two equal targets") {
    Matrix x(2, 2);
    x << -1.0, 0.5, 1.0, 0.5;
    const GpModel m(x, Matrix::Constant(2, 1, 0.7), {GpHyperparams::from_natural(Vector::Ones(2), 1.0, 0.1)});
    const GpPredictionGrads g = m.predict_grads(Eigen::Vector2d(0.0, 0.5));
    CHECK(std::abs(g.dmean(0, 0)) < 1e-14);
}

TEST_CASE("batched prediction equals pointwise prediction") {
    const GpModel m = random_model(CounterRng(4), 4, 30, 3, 2);
    const Matrix q = random_matrix(3, 150, CounterRng(5), 1);
    const GpBatchPrediction b = m.predict_batch(q, true);
    for (Eigen::Index p = 0; p < q.cols(); ++p) {
        const GpPrediction single = m.predict(q.col(p));
        CHECK((b.mean.col(p) - single.mean).norm() < 1e-12);
        CHECK((b.model_variance.col(p) - single.model_variance).norm() < 1e-12);
    }
    // block-aligned sub-batches reproduce the full batch bit-exactly
    const GpBatchPrediction tail = m.predict_batch(q.rightCols(86), true);
    CHECK(tail.mean == b.mean.rightCols(86));
    CHECK(tail.model_variance == b.model_variance.rightCols(86));
    CHECK(tail.dmean[5] == b.dmean[64 + 5]);
}

TEST_CASE("near-noiseless prediction interpolates the targets") {
    const CounterRng rng(6);
    const Matrix x = random_matrix(10, 2, rng, 1, 2.0);
    const Vector y = x.col(0).array().sin() + x.col(1).array();
    const GpModel m(x, y, {GpHyperparams::from_natural(Eigen::Vector2d(0.8, 0.8), 1.0, 1e-7)});
    for (Eigen::Index i = 0; i < 10; ++i) {
        CHECK(std::abs(m.predict(x.row(i).transpose()).mean[0] - y[i]) < 1e-6);
    }
}

TEST_CASE("factorizations are cached until the hyperparameters change") {
    GpModel m = random_model(CounterRng(7), 7);
    const std::size_t before = m.factorization_count();
    for (int i = 0; i < 20; ++i) {
        m.predict(Vector::Constant(3, 0.1 * i));
        m.predict_grads(Vector::Constant(3, 0.1 * i));
    }
    CHECK(m.factorization_count() == before);
    m.set_hyperparams(0, m.hyperparams(0));
    CHECK(m.factorization_count() == before + 1);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    const GpModel m = random_model(CounterRng(8), 8);
    const GpModel back = GpModel::from_json(nlohmann::json::parse(m.to_json().dump()));
    CHECK(back.inputs() == m.inputs());
    CHECK(back.targets() == m.targets());
    for (Eigen::Index a = 0; a < m.output_dim(); ++a) {
        CHECK(back.hyperparams(a).packed() == m.hyperparams(a).packed());
        CHECK(back.jitter(a) == m.jitter(a));
    }
    const Vector q = Eigen::Vector3d(0.1, -0.2, 0.3);
    CHECK(back.predict(q).mean == m.predict(q).mean);
    CHECK(back.predict(q).variance == m.predict(q).variance);
}

TEST_CASE("training recovers the lengthscale of a known GP") {
    const double l_true = 0.7;
    const Eigen::Index n = 100;
    const CounterRng rng(11);
    Matrix x(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(i, 0) = -3.0 + 6.0 * rng.uniform(Stream::misc, 1, static_cast<std::uint32_t>(i), 0);
    }
    const GpHyperparams truth = GpHyperparams::from_natural(Vector::Constant(1, l_true), 1.0, 0.1);
    Matrix k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            k(i, j) = kernel_eval(x.row(i).transpose(), x.row(j).transpose(), truth);
        }
    }
    k.diagonal().array() += 1e-8;
    const Matrix l = k.llt().matrixL();
    Vector y = l * random_matrix(n, 1, rng, 2).col(0);
    y += 0.1 * random_matrix(n, 1, rng, 3).col(0);
    const GpModel trained = train_hyperparams(GpModel(x, y), GpTrainOptions{});
    CHECK(std::abs(trained.hyperparams(0).log_lengthscales[0] - std::log(l_true)) < 0.5);
}

TEST_CASE("noise-free linear data drives the noise to its lower bound") {
    const Eigen::Index n = 20;
    Matrix x(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(i, 0) = -1.0 + 2.0 * static_cast<double>(i) / (n - 1);
    }
    const Vector y = 2.0 * x.col(0);
    GpTrainOptions opts;
    const GpModel trained = train_hyperparams(GpModel(x, y), opts);
    const double ts = std::sqrt((y.array() - y.mean()).square().sum() / (n - 1));
    CHECK(trained.hyperparams(0).noise_std() <= 1.01 * opts.min_noise_ratio * ts);
}

TEST_CASE("best-of-restarts is deterministic") {
    const CounterRng rng(12);
    const Matrix x = random_matrix(30, 2, rng, 1);
    const Vector y = x.col(0).array().sin() + 0.05 * random_matrix(30, 1, rng, 2).col(0).array();
    GpTrainOptions one;
    one.restarts = 1;
    GpTrainOptions three;
    three.restarts = 3;
    const GpModel a = train_hyperparams(GpModel(x, y), one);
    const GpModel b = train_hyperparams(GpModel(x, y), three);
    const double va = nlml(a, 0).value;
    const double vb = nlml(b, 0).value;
    CHECK(vb <= va + 1e-9);
    if (std::abs(va - vb) < 1e-6) {
        CHECK((a.hyperparams(0).packed() - b.hyperparams(0).packed()).norm() < 1e-2);
    }
    const GpModel again = train_hyperparams(GpModel(x, y), three);
    CHECK(again.hyperparams(0).packed() == b.hyperparams(0).packed());
}
