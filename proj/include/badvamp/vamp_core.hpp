#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "badvamp/denoisers.hpp"
#include "badvamp/operators.hpp"

namespace badvamp {

// Floor applied to the average denoiser derivative when forming the
// posterior precision eta = gamma / alpha, so that an all-off prior
// (alpha -> 0) yields a huge but finite eta.
inline constexpr double kAlphaFloor = 1e-14;

// Per-column message state. Vectors have length N.
struct ColumnState {
    Eigen::VectorXd r1;
    double gamma1 = 0.0;
    Eigen::VectorXd r2;
    double gamma2 = 0.0;
    Eigen::VectorXd x1;
    double eta1 = 0.0;
    Eigen::VectorXd x2;
    double eta2 = 0.0;
};

struct SolverConfig {
    int t_max = 200;
    int tau1_max = 1;  // extra denoiser-side EM passes per outer iteration
    int tau2_max = 0;  // extra measurement-side EM passes per outer iteration
    double zeta = 0.8;
    double gamma_min = 1e-6;
    double gamma_max = 1e11;
    double tol = 1e-8;  // relative change of stacked x1 that stops the loop
    int restarts = 5;
    double gamma1_init = 1e-2;
    bool auto_tune = true;           // re-estimate gamma1/gamma2 from the posterior fit
    bool symmetric_damping = false;  // damp the (gamma2, r2) direction as well
    double restart_residual_db = -30.0;
    // Outer iterations before hyperparameter learning engages. Early r1
    // messages are operator-colored junk: the prior EM would fit them with a
    // dense low-variance mixture and the precision re-estimates would ratchet
    // up on the barely-shrunk output, locking the run into a dense fit.
    int prior_warmup = 5;
    int auto_tune_warmup = 1;

    void validate() const;  // throws std::invalid_argument
};

struct LmmseResult {
    Eigen::VectorXd x2;
    double eta2 = 0.0;
    Eigen::VectorXd resolvent_diag;  // 1/(gamma2 + gamma_w * s_n)
};

// Measurement-side denoiser through the shared eigenbasis:
//   x2 = U diag(gamma2 + gamma_w s)^-1 U^T (gamma2 r2 + gamma_w aty)
//   1/eta2 = mean_n 1/(gamma2 + gamma_w s_n)
LmmseResult lmmse_denoise(const OperatorEig& eig, const Eigen::VectorXd& aty,
                          const Eigen::VectorXd& r2, double gamma2, double gamma_w);

struct ExtrinsicMessage {
    double gamma = 0.0;
    Eigen::VectorXd r;
};

// Extrinsic message (gamma_new, r_new) from a posterior (eta, xhat) and the
// incoming message (gamma, r). The precision target eta - gamma is clamped
// to [gamma_min, gamma_max]; the mean uses the unclamped difference, falling
// back to xhat when eta == gamma. With `prev` supplied, both outputs are
// damped: (1 - zeta) * prev + zeta * target.
ExtrinsicMessage extrinsic(double eta, const Eigen::VectorXd& xhat, double gamma,
                           const Eigen::VectorXd& r, double zeta, double gamma_min,
                           double gamma_max, const ExtrinsicMessage* prev = nullptr);

// Called at the end of each outer iteration with the full per-column state;
// (r1, gamma1) hold the freshly damped messages for the next iteration.
using TraceHook = std::function<void(int t, const std::vector<ColumnState>&)>;

struct VampIterInfo {
    int t = 0;
    double gamma1 = 0.0, eta1 = 0.0, gamma2 = 0.0, eta2 = 0.0;
    double nmse_db = 0.0;  // only meaningful when ground truth was supplied
};

struct VampResult {
    Eigen::VectorXd xhat;
    std::vector<VampIterInfo> history;
    int iterations = 0;
    bool converged = false;
};

// Plain VAMP for a known operator and known noise precision (no learning,
// no auto-tuning). Damping follows cfg.zeta / cfg.symmetric_damping.
VampResult run_vamp(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                    const PriorParams& prior, double gamma_w, const SolverConfig& cfg,
                    const Eigen::VectorXd* x_true = nullptr, const TraceHook& trace = {});

}  // namespace badvamp
