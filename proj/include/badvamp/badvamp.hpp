#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <vector>

#include "badvamp/rng.hpp"
#include "badvamp/vamp_core.hpp"

namespace badvamp {

// Sufficient statistics of the measurement-side pseudo-posterior consumed by
// the EM updates of theta_A and gamma_w.
struct EmWorkspace {
    Eigen::MatrixXd csum;      // N x N, sum over columns of the per-column covariances
    Eigen::MatrixXd x2;        // N x L, stacked posterior means
    Eigen::MatrixXd s;         // N x N, csum + x2 x2^T (cached, every update needs it)
    Eigen::MatrixXd h;         // Q x Q, filled by em_update_thetaA
    Eigen::VectorXd beta;      // Q, filled by em_update_thetaA
    Eigen::VectorXd trace_cl;  // L, tr{C_l}/N per column
};

EmWorkspace make_workspace(const OperatorEig& eig, const Eigen::VectorXd& dsum,
                           Eigen::MatrixXd x2, const Eigen::VectorXd& eta2);

struct Hyperparams {
    Eigen::VectorXd theta_a;  // structured coefficients (empty when Q = 0)
    Eigen::MatrixXd a_dense;  // current operator estimate in unstructured mode
    PriorParams prior;
    double gamma_w = 1.0;
    bool learn_theta_a = true;
    bool learn_gamma_w = true;
};

struct BadVampInit {
    Hyperparams hyper;
    Eigen::MatrixXd r1;      // N x L
    Eigen::VectorXd gamma1;  // L
};

struct BadVampIterInfo {
    int t = 0;
    double gamma1_mean = 0.0, eta1_mean = 0.0, gamma2_mean = 0.0, eta2_mean = 0.0;
    double gamma_w = 0.0;
    double residual_fro = 0.0;  // ||Y - A(theta) x1||_F
    double x1_change = 0.0;     // relative change of stacked x1
};

struct RunResult {
    Eigen::VectorXd theta_a_hat;  // structured mode only
    Eigen::MatrixXd a_hat;        // operator estimate, M x N
    Eigen::MatrixXd x_hat;        // N x L
    PriorParams prior_hat;
    double gamma_w_hat = 0.0;
    int iterations = 0;
    int restarts_used = 0;
    bool converged = false;
    double residual_db = 0.0;  // 10 log10 ||Y - A x||_F^2 / ||Y||_F^2
    std::vector<BadVampIterInfo> history;
};

// Thrown when the iteration produces non-finite state; the restart wrapper
// treats it as a failed attempt.
struct NonFiniteState : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Maximizer of the expected measurement log-likelihood over the structured
// coefficients: builds H and beta from the gram tables into `ws` and returns
// solve(H, beta) with a one-shot ridge fallback. On a singular system the
// previous theta is returned and *warning is set.
Eigen::VectorXd em_update_thetaA(const GramTables& grams, EmWorkspace& ws,
                                 const Eigen::VectorXd& theta_prev, bool* warning = nullptr);

// Unstructured special case: A = Y x2^T (csum + x2 x2^T)^-1.
Eigen::MatrixXd em_update_A_unstructured(const Eigen::MatrixXd& y, const EmWorkspace& ws,
                                         const Eigen::MatrixXd& a_prev, bool* warning = nullptr);

// 1/gamma_w = (||Y - A x2||_F^2 + tr{A csum A^T}) / (M L), clamped.
double em_update_gamma_w(const Eigen::MatrixXd& y, const Eigen::MatrixXd& a_eval,
                         const EmWorkspace& ws, double gamma_min, double gamma_max);

// Same contract as retune_gamma1, applied to the measurement side.
double retune_gamma2(const Eigen::VectorXd& x2, const Eigen::VectorXd& r2, double eta2,
                     double gamma_min, double gamma_max);

// Quadratic EM objective in theta (to be minimized), evaluated from first
// principles; used to check stationarity and monotonicity of the updates.
double theta_objective(const AffineOperator& op, const Eigen::VectorXd& theta,
                       const Eigen::MatrixXd& y, const EmWorkspace& ws);

// Default initialization: r1 = 0, gamma1 = gamma1_init, random operator
// coefficients, gamma_w from a 20 dB initial SNR guess, prior scale matched
// to the measurement energy. Fields whose learn flags are off keep the
// caller-supplied values.
BadVampInit make_default_init(const Eigen::MatrixXd& y, const AffineOperator& op,
                              const PriorParams& prior, Rng& rng,
                              std::optional<int> sparsity_hint = std::nullopt,
                              double gamma1_init = 1e-2);

RunResult run_badvamp(const Eigen::MatrixXd& y, const AffineOperator& op, const SolverConfig& cfg,
                      const BadVampInit& init, const TraceHook& trace = {});

// Runs run_badvamp up to cfg.restarts + 1 times, carrying the final theta_A
// into the next attempt and re-initializing everything else, until the fit
// reaches cfg.restart_residual_db. Returns the attempt with the best fit.
RunResult run_badvamp_with_restarts(const Eigen::MatrixXd& y, const AffineOperator& op,
                                    const SolverConfig& cfg, const PriorParams& prior0, Rng& rng,
                                    std::optional<int> sparsity_hint = std::nullopt,
                                    bool learn_theta_a = true,
                                    std::optional<double> known_gamma_w = std::nullopt);

}  // namespace badvamp
