#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "badvamp/badvamp.hpp"
#include "badvamp/problems.hpp"
#include "oracle_support.hpp"

using badvamp::AffineOperator;
using badvamp::BadVampInit;
using badvamp::EmWorkspace;
using badvamp::PriorParams;
using badvamp::Rng;
using badvamp::SolverConfig;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

EmWorkspace workspace_from(const MatrixXd& csum, const MatrixXd& x2) {
    EmWorkspace ws;
    ws.csum = csum;
    ws.x2 = x2;
    ws.s = csum + x2 * x2.transpose();
    ws.trace_cl = VectorXd::Ones(x2.cols());
    return ws;
}

AffineOperator random_structured(int m, int n, int q, Rng& rng) {
    std::vector<MatrixXd> basis(q);
    for (auto& b : basis) b = rng.normal_matrix(m, n);
    return AffineOperator::structured(rng.normal_matrix(m, n), std::move(basis));
}

// Straightforward bilinear EM-VAMP reference: per-column matrix inverses,
// H and beta assembled from explicit products, damped return messages.
// Used to pin down the driver's single-pass reduction.
struct Alg2Reference {
    MatrixXd x1, x2, r1, r2;
    VectorXd gamma1, gamma2, eta1, eta2;
    VectorXd theta;
    double gamma_w = 0.0;
    PriorParams prior;

    void run(const MatrixXd& y, const AffineOperator& op, const SolverConfig& cfg,
             const BadVampInit& init, int iterations,
             const std::function<void(int, const Alg2Reference&)>& observe) {
        const int n = op.cols();
        const int cols = static_cast<int>(y.cols());
        const int q = op.num_params();
        r1 = init.r1;
        gamma1 = init.gamma1;
        theta = init.hyper.theta_a;
        gamma_w = init.hyper.gamma_w;
        prior = init.hyper.prior;
        x1.resize(n, cols);
        x2.resize(n, cols);
        r2.resize(n, cols);
        gamma2.resize(cols);
        eta1.resize(cols);
        eta2.resize(cols);

        for (int t = 0; t < iterations; ++t) {
            std::vector<badvamp::DenoiseOutput> cache(cols);
            for (int l = 0; l < cols; ++l) {
                cache[l] = badvamp::denoise(prior, r1.col(l), gamma1[l]);
                x1.col(l) = cache[l].xhat;
                eta1[l] = gamma1[l] / std::max(cache[l].alpha, badvamp::kAlphaFloor);
            }
            if (prior.learns_anything())
                prior = badvamp::em_update_prior(prior, r1, gamma1, cache);
            for (int l = 0; l < cols; ++l) {
                const double diff = eta1[l] - gamma1[l];
                gamma2[l] = std::clamp(diff, cfg.gamma_min, cfg.gamma_max);
                if (diff != 0.0)
                    r2.col(l) = (eta1[l] * x1.col(l) - gamma1[l] * r1.col(l)) / diff;
                else
                    r2.col(l) = x1.col(l);
            }

            const MatrixXd a = badvamp::evaluate(op, theta);
            const MatrixXd gram = a.transpose() * a;
            MatrixXd csum = MatrixXd::Zero(n, n);
            for (int l = 0; l < cols; ++l) {
                MatrixXd cl = gamma_w * gram;
                cl.diagonal().array() += gamma2[l];
                const MatrixXd cl_inv = cl.inverse();
                x2.col(l) =
                    cl_inv * (gamma2[l] * r2.col(l) + gamma_w * (a.transpose() * y.col(l)));
                eta2[l] = n / cl_inv.trace();
                csum += cl_inv;
            }
            const MatrixXd s = csum + x2 * x2.transpose();
            MatrixXd h(q, q);
            VectorXd beta(q);
            for (int i = 0; i < q; ++i) {
                for (int j = 0; j < q; ++j)
                    h(i, j) = (op.basis[j].transpose() * op.basis[i] * s).trace();
                beta[i] = (y.transpose() * op.basis[i] * x2).trace() -
                          (op.a0.transpose() * op.basis[i] * s).trace();
            }
            theta = h.fullPivLu().solve(beta);
            const MatrixXd a_new = badvamp::evaluate(op, theta);
            gamma_w = std::clamp(
                static_cast<double>(y.rows()) * cols /
                    ((y - a_new * x2).squaredNorm() + (a_new * csum * a_new.transpose()).trace()),
                cfg.gamma_min, cfg.gamma_max);

            for (int l = 0; l < cols; ++l) {
                const double diff = eta2[l] - gamma2[l];
                const double target_g = std::clamp(diff, cfg.gamma_min, cfg.gamma_max);
                const VectorXd target_r =
                    diff != 0.0 ? VectorXd((eta2[l] * x2.col(l) - gamma2[l] * r2.col(l)) / diff)
                                : VectorXd(x2.col(l));
                gamma1[l] = (1.0 - cfg.zeta) * gamma1[l] + cfg.zeta * target_g;
                r1.col(l) = (1.0 - cfg.zeta) * r1.col(l) + cfg.zeta * target_r;
            }
            observe(t, *this);
        }
    }
};

}  // namespace

TEST_CASE("em_update_thetaA: scalar ratio with identity basis") {
    const int n = 4;
    auto op = AffineOperator::structured(MatrixXd::Zero(n, n), {MatrixXd::Identity(n, n)});
    Rng rng(31);
    const MatrixXd x2 = rng.normal_matrix(n, 3);
    const MatrixXd y = 2.0 * x2;
    const auto grams = badvamp::precompute_grams(op, y);
    EmWorkspace ws = workspace_from(MatrixXd::Zero(n, n), x2);
    const VectorXd theta = badvamp::em_update_thetaA(grams, ws, VectorXd::Zero(1));
    CHECK(theta[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("em_update_thetaA: noiseless consistency recovers theta exactly") {
    Rng rng(32);
    const int m = 6, n = 5, q = 3;
    const auto op = random_structured(m, n, q, rng);
    const VectorXd theta_star = rng.normal_vector(q);
    const MatrixXd x2 = rng.normal_matrix(n, 8);
    const MatrixXd y = badvamp::evaluate(op, theta_star) * x2;
    const auto grams = badvamp::precompute_grams(op, y);
    EmWorkspace ws = workspace_from(MatrixXd::Zero(n, n), x2);
    const VectorXd theta = badvamp::em_update_thetaA(grams, ws, VectorXd::Zero(q));
    CHECK((theta - theta_star).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("em_update_thetaA output is a stationary point of the EM objective") {
    Rng rng(33);
    const int m = 6, n = 5, q = 3;
    const auto op = random_structured(m, n, q, rng);
    const MatrixXd y = rng.normal_matrix(m, 7);
    const MatrixXd b = rng.normal_matrix(n, n);
    EmWorkspace ws = workspace_from(b * b.transpose(), rng.normal_matrix(n, 7));
    const auto grams = badvamp::precompute_grams(op, y);
    const VectorXd theta = badvamp::em_update_thetaA(grams, ws, VectorXd::Zero(q));

    const auto objective = [&](const VectorXd& t) { return badvamp::theta_objective(op, t, y, ws); };
    const VectorXd grad = oracle::fd_gradient(objective, theta);
    CHECK(grad.norm() <= 1e-6 * std::max(1.0, ws.beta.norm()));

    // H is symmetric PSD whenever csum is PSD
    CHECK((ws.h - ws.h.transpose()).cwiseAbs().maxCoeff() <=
          1e-10 * ws.h.cwiseAbs().maxCoeff());
    const Eigen::SelfAdjointEigenSolver<MatrixXd> es(ws.h);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8 * ws.h.trace());
}

TEST_CASE("em_update_thetaA never increases the EM objective") {
    Rng rng(34);
    for (int trial = 0; trial < 10; ++trial) {
        const int m = 5, n = 4, q = 2;
        const auto op = random_structured(m, n, q, rng);
        const MatrixXd y = rng.normal_matrix(m, 6);
        const MatrixXd b = rng.normal_matrix(n, n);
        EmWorkspace ws = workspace_from(0.1 * b * b.transpose(), rng.normal_matrix(n, 6));
        const auto grams = badvamp::precompute_grams(op, y);
        const VectorXd theta_prev = rng.normal_vector(q);
        const VectorXd theta = badvamp::em_update_thetaA(grams, ws, theta_prev);
        const double before = badvamp::theta_objective(op, theta_prev, y, ws);
        const double after = badvamp::theta_objective(op, theta, y, ws);
        CHECK(after <= before + 1e-10 * std::abs(before));
    }
}

TEST_CASE("em_update_A_unstructured: exact inverse case") {
    Rng rng(35);
    const int n = 4;
    MatrixXd x2 = rng.normal_matrix(n, n);
    while (std::abs(x2.determinant()) < 0.1) x2 = rng.normal_matrix(n, n);
    const MatrixXd a0 = rng.normal_matrix(3, n);
    const MatrixXd y = a0 * x2;
    EmWorkspace ws = workspace_from(MatrixXd::Zero(n, n), x2);
    const MatrixXd a = badvamp::em_update_A_unstructured(y, ws, MatrixXd::Zero(3, n));
    CHECK((a - a0).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("em_update_A_unstructured: scalar substitution") {
    MatrixXd y(1, 1), x2(1, 1), c(1, 1);
    y << 1.0;
    x2 << 1.0;
    c << 1.0;
    EmWorkspace ws = workspace_from(c, x2);
    const MatrixXd a = badvamp::em_update_A_unstructured(y, ws, MatrixXd::Zero(1, 1));
    CHECK(a(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("em_update_A_unstructured equals the elementary-basis structured path") {
    Rng rng(36);
    const int m = 3, n = 4;
    std::vector<MatrixXd> basis;
    for (int col = 0; col < n; ++col)
        for (int row = 0; row < m; ++row) {
            MatrixXd e = MatrixXd::Zero(m, n);
            e(row, col) = 1.0;
            basis.push_back(std::move(e));
        }
    const auto op = AffineOperator::structured(MatrixXd::Zero(m, n), std::move(basis));
    const MatrixXd y = rng.normal_matrix(m, 6);
    const MatrixXd b = rng.normal_matrix(n, n);
    EmWorkspace ws = workspace_from(b * b.transpose(), rng.normal_matrix(n, 6));

    const MatrixXd direct = badvamp::em_update_A_unstructured(y, ws, MatrixXd::Zero(m, n));
    const auto grams = badvamp::precompute_grams(op, y);
    EmWorkspace ws2 = workspace_from(ws.csum, ws.x2);
    const VectorXd theta = badvamp::em_update_thetaA(grams, ws2, VectorXd::Zero(m * n));
    const MatrixXd via_theta = badvamp::evaluate(op, theta);
    CHECK((direct - via_theta).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("em_update_gamma_w: zero residual clamps at gamma_max") {
    Rng rng(37);
    const MatrixXd a = rng.normal_matrix(3, 4);
    const MatrixXd x2 = rng.normal_matrix(4, 5);
    EmWorkspace ws = workspace_from(MatrixXd::Zero(4, 4), x2);
    CHECK(badvamp::em_update_gamma_w(a * x2, a, ws, 1e-6, 1e11) == 1e11);
}

TEST_CASE("em_update_gamma_w: pure-noise model") {
    Rng rng(38);
    const MatrixXd y = rng.normal_matrix(4, 6);
    EmWorkspace ws = workspace_from(MatrixXd::Zero(3, 3), MatrixXd::Zero(3, 6));
    const double gw = badvamp::em_update_gamma_w(y, MatrixXd::Zero(4, 3), ws, 1e-6, 1e11);
    CHECK(gw == doctest::Approx(24.0 / y.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("em_update_gamma_w maximizes the likelihood over a log grid") {
    Rng rng(39);
    const int m = 5, n = 4, cols = 6;
    const MatrixXd a = rng.normal_matrix(m, n);
    const MatrixXd y = rng.normal_matrix(m, cols);
    const MatrixXd b = rng.normal_matrix(n, n);
    EmWorkspace ws = workspace_from(0.3 * b * b.transpose(), rng.normal_matrix(n, cols));
    const double gw = badvamp::em_update_gamma_w(y, a, ws, 1e-12, 1e14);

    const double fit = (y - a * ws.x2).squaredNorm() + (a * ws.csum * a.transpose()).trace();
    const double ml = m * cols;
    const auto loglik = [&](double g) { return 0.5 * ml * std::log(g) - 0.5 * g * fit; };
    double best_g = 0.0, best_v = -1e300;
    const int points = 10000;
    for (int i = 0; i < points; ++i) {
        const double g = std::pow(10.0, -8.0 + 20.0 * i / (points - 1));
        if (loglik(g) > best_v) {
            best_v = loglik(g);
            best_g = g;
        }
    }
    const double cell = 20.0 / (points - 1);
    CHECK(std::abs(std::log10(gw) - std::log10(best_g)) <= cell);
}

TEST_CASE("retune_gamma2 contract") {
    VectorXd x(1), r(1);
    x << 1.0;
    r << 1.0;
    CHECK(badvamp::retune_gamma2(x, r, 3.0, 1e-6, 1e11) == doctest::Approx(3.0).epsilon(1e-15));
    r << -1.0;
    CHECK(badvamp::retune_gamma2(x, r, 1.0, 1e-6, 1e11) == doctest::Approx(0.2).epsilon(1e-14));
    Rng rng(40);
    for (int i = 0; i < 20; ++i) {
        const VectorXd xr = rng.normal_vector(6);
        const VectorXd rr = rng.normal_vector(6);
        const double eta = std::exp(2.0 * rng.normal());
        CHECK(badvamp::retune_gamma2(xr, rr, eta, 1e-300, 1e300) <= eta * (1.0 + 1e-12));
    }
}

TEST_CASE("run_badvamp with learning off reduces to run_vamp") {
    for (const std::uint64_t seed : {51ull, 52ull}) {
        Rng rng(seed);
        const int m = 12, n = 8;
        const MatrixXd a = rng.normal_matrix(m, n);
        VectorXd x = VectorXd::Zero(n);
        for (int i = 0; i < 2; ++i) x[static_cast<int>(rng.integer(n))] = rng.normal();
        const double gamma_w = 50.0;
        const VectorXd y = a * x + rng.normal_vector(m, 0.0, std::sqrt(1.0 / gamma_w));

        SolverConfig cfg;
        cfg.t_max = 40;
        cfg.auto_tune = false;
        cfg.tau1_max = 0;
        cfg.tau2_max = 0;
        const auto prior = PriorParams::bernoulli_gaussian(0.25, 1.0);

        std::vector<std::vector<badvamp::ColumnState>> trace_vamp, trace_bad;
        const auto res_vamp = badvamp::run_vamp(
            a, y, prior, gamma_w, cfg, nullptr,
            [&](int, const std::vector<badvamp::ColumnState>& s) { trace_vamp.push_back(s); });

        const auto op = AffineOperator::structured(a, {});
        BadVampInit init;
        init.hyper.prior = prior;
        init.hyper.gamma_w = gamma_w;
        init.hyper.learn_theta_a = false;
        init.hyper.learn_gamma_w = false;
        init.r1 = MatrixXd::Zero(n, 1);
        init.gamma1 = VectorXd::Constant(1, cfg.gamma1_init);
        const auto res_bad = badvamp::run_badvamp(
            y, op, cfg, init,
            [&](int, const std::vector<badvamp::ColumnState>& s) { trace_bad.push_back(s); });

        REQUIRE(trace_vamp.size() == trace_bad.size());
        for (std::size_t t = 0; t < trace_vamp.size(); ++t) {
            const auto& v = trace_vamp[t][0];
            const auto& b = trace_bad[t][0];
            CHECK((v.x1 - b.x1).cwiseAbs().maxCoeff() <= 1e-12);
            CHECK((v.r1 - b.r1).cwiseAbs().maxCoeff() <= 1e-12);
            CHECK((v.x2 - b.x2).cwiseAbs().maxCoeff() <= 1e-12);
            CHECK(v.gamma1 == doctest::Approx(b.gamma1).epsilon(1e-12));
            CHECK(v.gamma2 == doctest::Approx(b.gamma2).epsilon(1e-12));
            CHECK(v.eta1 == doctest::Approx(b.eta1).epsilon(1e-12));
            CHECK(v.eta2 == doctest::Approx(b.eta2).epsilon(1e-12));
        }
        CHECK((res_vamp.xhat - res_bad.x_hat.col(0)).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("single-pass run_badvamp without auto-tuning matches the direct reference") {
    Rng rng(53);
    const int m = 6, n = 5, q = 2, cols = 3;
    const auto op = random_structured(m, n, q, rng);
    const VectorXd theta_star = rng.normal_vector(q);
    const MatrixXd x = rng.normal_matrix(n, cols);
    const MatrixXd y =
        badvamp::evaluate(op, theta_star) * x + rng.normal_matrix(m, cols, 0.0, 0.03);

    SolverConfig cfg;
    cfg.tau1_max = 0;
    cfg.tau2_max = 0;
    cfg.auto_tune = false;
    cfg.t_max = 8;
    cfg.tol = 0.0;
    cfg.prior_warmup = 0;  // the reference starts learning immediately

    auto prior = PriorParams::bernoulli_gaussian(0.5, 1.0);
    prior.learn_lambda = true;
    prior.learn_variance = true;
    Rng init_rng(99);
    BadVampInit init = badvamp::make_default_init(y, op, prior, init_rng);

    std::vector<std::vector<badvamp::ColumnState>> trace;
    std::vector<VectorXd> thetas;
    std::vector<double> gws;
    (void)badvamp::run_badvamp(y, op, cfg, init,
                               [&](int, const std::vector<badvamp::ColumnState>& s) {
                                   trace.push_back(s);
                               });

    Alg2Reference ref;
    int checked = 0;
    ref.run(y, op, cfg, init, 8, [&](int t, const Alg2Reference& r) {
        REQUIRE(t < static_cast<int>(trace.size()));
        const auto& states = trace[t];
        for (int l = 0; l < cols; ++l) {
            const auto scale = [](double v) { return std::max(1.0, std::abs(v)); };
            CHECK((states[l].x1 - r.x1.col(l)).cwiseAbs().maxCoeff() <= 1e-12);
            CHECK((states[l].x2 - r.x2.col(l)).cwiseAbs().maxCoeff() <=
                  1e-12 * scale(r.x2.col(l).cwiseAbs().maxCoeff()));
            CHECK((states[l].r1 - r.r1.col(l)).cwiseAbs().maxCoeff() <=
                  1e-12 * scale(r.r1.col(l).cwiseAbs().maxCoeff()));
            CHECK(std::abs(states[l].gamma2 - r.gamma2[l]) <= 1e-12 * scale(r.gamma2[l]));
            CHECK(std::abs(states[l].eta2 - r.eta2[l]) <= 1e-12 * scale(r.eta2[l]));
            CHECK(std::abs(states[l].gamma1 - r.gamma1[l]) <= 1e-12 * scale(r.gamma1[l]));
        }
        ++checked;
    });
    CHECK(checked == 8);
}

TEST_CASE("precisions stay inside the clamp interval through a full run") {
    Rng rng(54);
    const auto inst = badvamp::gen_dl(8, 40, 2, badvamp::DlMode::kUnstructured, 30.0, 1.0, 7);
    SolverConfig cfg;
    cfg.t_max = 30;
    auto prior = PriorParams::bernoulli_gaussian(0.25, 1.0);
    prior.learn_lambda = true;
    prior.learn_variance = true;
    Rng init_rng(5);
    BadVampInit init = badvamp::make_default_init(inst.y, inst.op, prior, init_rng, 2);
    bool all_in_range = true;
    (void)badvamp::run_badvamp(inst.y, inst.op, cfg, init,
                               [&](int, const std::vector<badvamp::ColumnState>& states) {
                                   for (const auto& s : states) {
                                       if (s.gamma1 < cfg.gamma_min || s.gamma1 > cfg.gamma_max ||
                                           s.gamma2 < cfg.gamma_min || s.gamma2 > cfg.gamma_max)
                                           all_in_range = false;
                                   }
                               });
    CHECK(all_in_range);
}

TEST_CASE("noiseless structured runs drive the residual down despite scale ambiguity") {
    const auto inst = badvamp::gen_dl(8, 64, 2, badvamp::DlMode::kStructured, std::nullopt, 1.0, 3);
    SolverConfig cfg;
    auto prior = PriorParams::bernoulli_gaussian(0.25, 1.0);
    prior.learn_lambda = true;
    prior.learn_variance = true;
    Rng rng(17);
    const auto res =
        badvamp::run_badvamp_with_restarts(inst.y, inst.op, cfg, prior, rng, inst.meta.k);
    CHECK(res.residual_db <= -40.0);
    // the fit succeeds even when theta itself is recovered only up to scale
    const double theta_err = (res.theta_a_hat - inst.theta_true).norm() / inst.theta_true.norm();
    (void)theta_err;  // no assertion: scale ambiguity makes it meaningless
}

TEST_CASE("make_default_init follows the documented policy") {
    Rng rng(55);
    const auto op = AffineOperator::make_unstructured(6, 10);
    const MatrixXd y = rng.normal_matrix(6, 4);
    auto prior = PriorParams::bernoulli_gaussian(0.5, 2.0);
    prior.learn_lambda = true;
    prior.learn_variance = true;
    Rng init_rng(56);
    const BadVampInit init = badvamp::make_default_init(y, op, prior, init_rng, 3);
    CHECK(init.r1.cwiseAbs().maxCoeff() == 0.0);
    CHECK(init.gamma1[0] == 1e-2);
    // 0 dB initial SNR guess and a unit-scale operator draw
    CHECK(init.hyper.gamma_w == doctest::Approx(24.0 / y.squaredNorm()).epsilon(1e-12));
    CHECK(init.hyper.a_dense.squaredNorm() == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(init.hyper.prior.lambda == doctest::Approx(0.5 * 3.0 / 10.0).epsilon(1e-12));
    const double expected_var =
        y.squaredNorm() / (4.0 * init.hyper.prior.lambda * init.hyper.a_dense.squaredNorm());
    CHECK(init.hyper.prior.variance == doctest::Approx(expected_var).epsilon(1e-12));
}

TEST_CASE("restart wrapper is deterministic for a fixed seed") {
    const auto inst = badvamp::gen_dl(6, 30, 2, badvamp::DlMode::kUnstructured, 35.0, 1.0, 11);
    SolverConfig cfg;
    cfg.t_max = 40;
    cfg.restarts = 2;
    auto prior = PriorParams::bernoulli_gaussian(0.3, 1.0);
    prior.learn_lambda = true;
    prior.learn_variance = true;
    Rng rng1(77), rng2(77);
    const auto r1 = badvamp::run_badvamp_with_restarts(inst.y, inst.op, cfg, prior, rng1, 2);
    const auto r2 = badvamp::run_badvamp_with_restarts(inst.y, inst.op, cfg, prior, rng2, 2);
    CHECK(r1.x_hat == r2.x_hat);
    CHECK(r1.a_hat == r2.a_hat);
    CHECK(r1.residual_db == r2.residual_db);
    CHECK(r1.restarts_used == r2.restarts_used);
}
