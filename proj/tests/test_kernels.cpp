#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "badvamp/kernels.hpp"
#include "badvamp/parallel.hpp"
#include "badvamp/rng.hpp"
#include "badvamp/vamp_core.hpp"

using badvamp::PriorParams;
using badvamp::Rng;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// The OpenMP kernels must reproduce the serial references bit for bit: the
// per-column work is identical and reductions run in a fixed order.

TEST_CASE("denoise_columns: parallel path is bitwise equal to serial") {
    Rng rng(11);
    const auto prior = PriorParams::bernoulli_gaussian(0.2, 1.3);
    const MatrixXd r = rng.normal_matrix(40, 33);
    VectorXd gamma(33);
    for (int l = 0; l < 33; ++l) gamma[l] = std::exp(2.0 * rng.normal());

    badvamp::kernels::DenoiseBatch serial, parallel;
    badvamp::kernels::denoise_columns_serial(prior, r, gamma, serial);
    badvamp::parallel::set_threads(4);
    badvamp::kernels::denoise_columns_parallel(prior, r, gamma, parallel);
    badvamp::parallel::set_threads(0);

    CHECK(serial.xhat == parallel.xhat);
    CHECK(serial.deriv == parallel.deriv);
    CHECK(serial.resp == parallel.resp);
    CHECK(serial.alpha == parallel.alpha);
}

TEST_CASE("denoise_columns agrees with per-column denoise") {
    Rng rng(12);
    const auto prior = PriorParams::bernoulli_gaussian(0.35, 0.7);
    const MatrixXd r = rng.normal_matrix(10, 5);
    VectorXd gamma(5);
    for (int l = 0; l < 5; ++l) gamma[l] = 0.5 + l;
    badvamp::kernels::DenoiseBatch batch;
    badvamp::kernels::denoise_columns(prior, r, gamma, batch);
    for (int l = 0; l < 5; ++l) {
        const auto one = badvamp::denoise(prior, r.col(l), gamma[l]);
        CHECK(batch.xhat.col(l) == one.xhat);
        CHECK(batch.alpha[l] == one.alpha);
    }
    const auto cols = batch.columns();
    CHECK(cols.size() == 5);
    CHECK(cols[3].responsibilities == VectorXd(batch.resp.col(3)));
}

TEST_CASE("lmmse_columns: parallel path is bitwise equal to serial") {
    Rng rng(13);
    const MatrixXd a = rng.normal_matrix(24, 20);
    const auto eig = badvamp::eig_gram(a);
    const MatrixXd y = rng.normal_matrix(24, 17);
    const MatrixXd aty = a.transpose() * y;
    const MatrixXd r2 = rng.normal_matrix(20, 17);
    VectorXd gamma2(17);
    for (int l = 0; l < 17; ++l) gamma2[l] = std::exp(rng.normal());

    badvamp::kernels::LmmseBatch serial, parallel;
    badvamp::kernels::lmmse_columns_serial(eig, aty, r2, gamma2, 2.5, serial);
    badvamp::parallel::set_threads(3);
    badvamp::kernels::lmmse_columns_parallel(eig, aty, r2, gamma2, 2.5, parallel);
    badvamp::parallel::set_threads(0);

    CHECK(serial.x2 == parallel.x2);
    CHECK(serial.eta2 == parallel.eta2);
    CHECK(serial.dsum == parallel.dsum);
}

TEST_CASE("lmmse_columns matches the single-column denoiser") {
    Rng rng(14);
    const MatrixXd a = rng.normal_matrix(12, 9);
    const auto eig = badvamp::eig_gram(a);
    const MatrixXd y = rng.normal_matrix(12, 4);
    const MatrixXd aty = a.transpose() * y;
    const MatrixXd r2 = rng.normal_matrix(9, 4);
    const VectorXd gamma2 = VectorXd::Constant(4, 0.8);

    badvamp::kernels::LmmseBatch batch;
    badvamp::kernels::lmmse_columns(eig, aty, r2, gamma2, 3.0, batch);
    VectorXd dsum = VectorXd::Zero(9);
    for (int l = 0; l < 4; ++l) {
        const auto one = badvamp::lmmse_denoise(eig, aty.col(l), r2.col(l), gamma2[l], 3.0);
        CHECK((batch.x2.col(l) - one.x2).cwiseAbs().maxCoeff() == 0.0);
        CHECK(batch.eta2[l] == one.eta2);
        dsum += one.resolvent_diag;
    }
    CHECK(batch.dsum.isApprox(dsum, 1e-15));
}

TEST_CASE("h_from_grams: parallel path is bitwise equal to serial") {
    Rng rng(15);
    const int q = 7, n = 10;
    std::vector<MatrixXd> basis(q);
    for (auto& b : basis) b = rng.normal_matrix(12, n);
    const auto op = badvamp::AffineOperator::structured(MatrixXd::Zero(12, n), std::move(basis));
    const auto grams = badvamp::precompute_grams(op, rng.normal_matrix(12, 3));
    MatrixXd s = rng.normal_matrix(n, n);
    s = (s + s.transpose()).eval();

    MatrixXd hs, hp;
    badvamp::kernels::h_from_grams_serial(grams, s, hs);
    badvamp::parallel::set_threads(4);
    badvamp::kernels::h_from_grams_parallel(grams, s, hp);
    badvamp::parallel::set_threads(0);
    CHECK(hs == hp);

    // symmetry for symmetric s
    CHECK((hs - hs.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * hs.cwiseAbs().maxCoeff());
}
