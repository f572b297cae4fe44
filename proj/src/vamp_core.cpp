#include "badvamp/vamp_core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace badvamp {

void SolverConfig::validate() const {
    if (t_max < 1) throw std::invalid_argument("SolverConfig: t_max must be >= 1");
    if (tau1_max < 0 || tau2_max < 0)
        throw std::invalid_argument("SolverConfig: inner iteration counts must be >= 0");
    if (!(zeta > 0.0) || zeta > 1.0)
        throw std::invalid_argument("SolverConfig: zeta must lie in (0, 1]");
    if (!(gamma_min > 0.0) || !(gamma_min < gamma_max))
        throw std::invalid_argument("SolverConfig: need 0 < gamma_min < gamma_max");
    if (!(tol >= 0.0)) throw std::invalid_argument("SolverConfig: tol must be >= 0");
    if (restarts < 0) throw std::invalid_argument("SolverConfig: restarts must be >= 0");
    if (!(gamma1_init > 0.0)) throw std::invalid_argument("SolverConfig: gamma1_init must be > 0");
}

LmmseResult lmmse_denoise(const OperatorEig& eig, const Eigen::VectorXd& aty,
                          const Eigen::VectorXd& r2, double gamma2, double gamma_w) {
    if (!(gamma2 > 0.0) || !(gamma_w > 0.0))
        throw std::invalid_argument("lmmse_denoise: precisions must be > 0");
    const int n = static_cast<int>(eig.s.size());
    if (aty.size() != n || r2.size() != n)
        throw std::invalid_argument("lmmse_denoise: vector lengths do not match eigenbasis");

    LmmseResult out;
    const Eigen::VectorXd z = gamma2 * r2 + gamma_w * aty;
    const Eigen::VectorXd w = eig.u.transpose() * z;
    out.resolvent_diag.resize(n);
    for (int i = 0; i < n; ++i) out.resolvent_diag[i] = 1.0 / (gamma2 + gamma_w * eig.s[i]);
    out.x2.noalias() = eig.u * out.resolvent_diag.cwiseProduct(w);
    out.eta2 = static_cast<double>(n) / out.resolvent_diag.sum();
    return out;
}

ExtrinsicMessage extrinsic(double eta, const Eigen::VectorXd& xhat, double gamma,
                           const Eigen::VectorXd& r, double zeta, double gamma_min,
                           double gamma_max, const ExtrinsicMessage* prev) {
    if (!(eta > 0.0) || !(gamma > 0.0))
        throw std::invalid_argument("extrinsic: eta and gamma must be > 0");
    const double diff = eta - gamma;
    const double target_gamma = std::clamp(diff, gamma_min, gamma_max);
    Eigen::VectorXd target_r;
    if (diff != 0.0)
        target_r = (eta * xhat - gamma * r) / diff;
    else
        target_r = xhat;

    ExtrinsicMessage out;
    if (prev != nullptr && zeta < 1.0) {
        out.gamma = (1.0 - zeta) * prev->gamma + zeta * target_gamma;
        out.r = (1.0 - zeta) * prev->r + zeta * target_r;
    } else {
        out.gamma = target_gamma;
        out.r = std::move(target_r);
    }
    return out;
}

VampResult run_vamp(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                    const PriorParams& prior, double gamma_w, const SolverConfig& cfg,
                    const Eigen::VectorXd* x_true, const TraceHook& trace) {
    cfg.validate();
    prior.validate();
    if (!(gamma_w > 0.0)) throw std::invalid_argument("run_vamp: gamma_w must be > 0");
    if (y.size() != a.rows()) throw std::invalid_argument("run_vamp: y length does not match A");

    const int n = static_cast<int>(a.cols());
    const OperatorEig eig = eig_gram(a);
    const Eigen::VectorXd aty = a.transpose() * y;

    Eigen::VectorXd r1 = Eigen::VectorXd::Zero(n);
    double gamma1 = cfg.gamma1_init;
    ExtrinsicMessage prev2;  // previous (gamma2, r2), for symmetric damping
    bool have_prev2 = false;

    VampResult res;
    Eigen::VectorXd x1_prev;

    for (int t = 0; t < cfg.t_max; ++t) {
        const DenoiseOutput den = denoise(prior, r1, gamma1);
        const double eta1 = gamma1 / std::max(den.alpha, kAlphaFloor);

        res.iterations = t + 1;
        const bool settled =
            t > 0 && (den.xhat - x1_prev).norm() <= cfg.tol * std::max(den.xhat.norm(), 1e-300);
        x1_prev = den.xhat;
        if (settled) {
            res.converged = true;
            res.xhat = den.xhat;
            break;
        }

        const ExtrinsicMessage m2 =
            extrinsic(eta1, den.xhat, gamma1, r1, cfg.zeta, cfg.gamma_min, cfg.gamma_max,
                      cfg.symmetric_damping && have_prev2 ? &prev2 : nullptr);
        const LmmseResult lm = lmmse_denoise(eig, aty, m2.r, m2.gamma, gamma_w);

        const ExtrinsicMessage prev1{gamma1, r1};
        const ExtrinsicMessage m1 = extrinsic(lm.eta2, lm.x2, m2.gamma, m2.r, cfg.zeta,
                                              cfg.gamma_min, cfg.gamma_max, &prev1);

        VampIterInfo info;
        info.t = t;
        info.gamma1 = gamma1;
        info.eta1 = eta1;
        info.gamma2 = m2.gamma;
        info.eta2 = lm.eta2;
        if (x_true != nullptr && x_true->norm() > 0)
            info.nmse_db = 10.0 * std::log10(std::max(
                               (den.xhat - *x_true).squaredNorm() / x_true->squaredNorm(), 1e-300));
        res.history.push_back(info);

        if (trace) {
            ColumnState cs;
            cs.r1 = m1.r;
            cs.gamma1 = m1.gamma;
            cs.r2 = m2.r;
            cs.gamma2 = m2.gamma;
            cs.x1 = den.xhat;
            cs.eta1 = eta1;
            cs.x2 = lm.x2;
            cs.eta2 = lm.eta2;
            trace(t, {cs});
        }

        prev2 = m2;
        have_prev2 = true;
        gamma1 = m1.gamma;
        r1 = m1.r;
        res.xhat = den.xhat;

        if (!r1.allFinite() || !std::isfinite(gamma1))
            throw std::runtime_error("run_vamp: non-finite state");
    }
    return res;
}

}  // namespace badvamp
