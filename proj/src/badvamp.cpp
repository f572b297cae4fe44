#include "badvamp/badvamp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "badvamp/kernels.hpp"

namespace badvamp {

namespace {

// Symmetric solve with a one-shot ridge fallback. Returns false when the
// system stays unusable after the ridge.
bool solve_spd(const Eigen::MatrixXd& lhs, const Eigen::MatrixXd& rhs, Eigen::MatrixXd& out) {
    const int dim = static_cast<int>(lhs.rows());
    auto attempt = [&](const Eigen::MatrixXd& m) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
        if (ldlt.info() != Eigen::Success) return false;
        out = ldlt.solve(rhs);
        if (!out.allFinite()) return false;
        const double scale = rhs.norm() + 1.0;
        return (m * out - rhs).norm() <= 1e-8 * scale;
    };
    if (attempt(lhs)) return true;
    const double ridge = 1e-12 * lhs.trace() / dim;
    Eigen::MatrixXd damped = lhs;
    damped.diagonal().array() += ridge;
    return attempt(damped);
}

double residual_db_of(const Eigen::MatrixXd& y, const Eigen::MatrixXd& a,
                      const Eigen::MatrixXd& x) {
    const double denom = y.squaredNorm();
    if (denom == 0.0) return -100.0;
    const double num = (y - a * x).squaredNorm();
    return 10.0 * std::log10(std::max(num / denom, 1e-300));
}

}  // namespace

EmWorkspace make_workspace(const OperatorEig& eig, const Eigen::VectorXd& dsum,
                           Eigen::MatrixXd x2, const Eigen::VectorXd& eta2) {
    EmWorkspace ws;
    ws.csum.noalias() = eig.u * dsum.asDiagonal() * eig.u.transpose();
    ws.csum = 0.5 * (ws.csum + ws.csum.transpose()).eval();
    ws.x2 = std::move(x2);
    ws.s = ws.csum;
    ws.s.selfadjointView<Eigen::Lower>().rankUpdate(ws.x2);
    ws.s.triangularView<Eigen::StrictlyUpper>() = ws.s.transpose();
    ws.trace_cl = eta2.cwiseInverse();
    return ws;
}

Eigen::VectorXd em_update_thetaA(const GramTables& grams, EmWorkspace& ws,
                                 const Eigen::VectorXd& theta_prev, bool* warning) {
    if (warning) *warning = false;
    const int q = static_cast<int>(grams.gram.size());
    kernels::h_from_grams(grams, ws.s, ws.h);
    ws.beta.resize(q);
    for (int i = 0; i < q; ++i) {
        ws.beta[i] = grams.ygram[i].transpose().cwiseProduct(ws.x2).sum() -
                     grams.a0gram[i].cwiseProduct(ws.s).sum();
    }
    Eigen::MatrixXd sol;
    if (!solve_spd(ws.h, ws.beta, sol)) {
        if (warning) *warning = true;
        return theta_prev;
    }
    return sol.col(0);
}

Eigen::MatrixXd em_update_A_unstructured(const Eigen::MatrixXd& y, const EmWorkspace& ws,
                                         const Eigen::MatrixXd& a_prev, bool* warning) {
    if (warning) *warning = false;
    // A solves A S = Y x2^T; take the transposed system S A^T = x2 Y^T.
    Eigen::MatrixXd at;
    if (!solve_spd(ws.s, ws.x2 * y.transpose(), at)) {
        if (warning) *warning = true;
        return a_prev;
    }
    return at.transpose();
}

double em_update_gamma_w(const Eigen::MatrixXd& y, const Eigen::MatrixXd& a_eval,
                         const EmWorkspace& ws, double gamma_min, double gamma_max) {
    const double ml = static_cast<double>(y.rows()) * static_cast<double>(y.cols());
    const double residual = (y - a_eval * ws.x2).squaredNorm();
    const double smear = (a_eval * ws.csum).cwiseProduct(a_eval).sum();
    const double inv = (residual + smear) / ml;
    if (inv <= 0.0) return gamma_max;
    return std::clamp(1.0 / inv, gamma_min, gamma_max);
}

double retune_gamma2(const Eigen::VectorXd& x2, const Eigen::VectorXd& r2, double eta2,
                     double gamma_min, double gamma_max) {
    return retune_gamma1(x2, r2, eta2, gamma_min, gamma_max);
}

double theta_objective(const AffineOperator& op, const Eigen::VectorXd& theta,
                       const Eigen::MatrixXd& y, const EmWorkspace& ws) {
    const Eigen::MatrixXd a = evaluate(op, theta);
    return (y - a * ws.x2).squaredNorm() + (a * ws.csum).cwiseProduct(a).sum();
}

BadVampInit make_default_init(const Eigen::MatrixXd& y, const AffineOperator& op,
                              const PriorParams& prior, Rng& rng,
                              std::optional<int> sparsity_hint, double gamma1_init) {
    const int n = op.cols();
    const int cols = static_cast<int>(y.cols());
    BadVampInit init;
    init.r1 = Eigen::MatrixXd::Zero(n, cols);
    init.gamma1 = Eigen::VectorXd::Constant(cols, gamma1_init);
    init.hyper.prior = prior;

    double op_trace = 0.0;
    if (op.unstructured) {
        // unit singular-value scale; a raw N(0,1) draw makes the first LMMSE
        // pass an exact-fit machine and the messages start overconfident
        init.hyper.a_dense = rng.normal_matrix(op.rows(), n);
        init.hyper.a_dense *= std::sqrt(n / init.hyper.a_dense.squaredNorm());
        op_trace = init.hyper.a_dense.squaredNorm();
    } else {
        init.hyper.theta_a = rng.normal_vector(op.num_params());
        op_trace = evaluate(op, init.hyper.theta_a).squaredNorm();
    }

    // 0 dB initial SNR guess. The gamma_w EM step only anneals upward as the
    // fit improves; an overconfident start cannot be walked back because the
    // precision re-estimates are one-sided.
    const double y_energy = y.squaredNorm();
    const double ml = static_cast<double>(y.rows()) * cols;
    init.hyper.gamma_w = y_energy > 0.0 ? ml / y_energy : 1.0;

    PriorParams& p = init.hyper.prior;
    if (p.learn_lambda && p.family == PriorFamily::kBernoulliGaussian) {
        p.lambda = sparsity_hint
                       ? 0.5 * std::min(1.0, static_cast<double>(*sparsity_hint) / n)
                       : 0.1;
        p.lambda = std::clamp(p.lambda, 1e-6, 1.0);
    }
    if (p.learn_variance && y_energy > 0.0 && op_trace > 0.0 && cols > 0) {
        p.variance = y_energy / (cols * p.lambda * op_trace);
    }
    return init;
}

RunResult run_badvamp(const Eigen::MatrixXd& y, const AffineOperator& op, const SolverConfig& cfg,
                      const BadVampInit& init, const TraceHook& trace) {
    cfg.validate();
    init.hyper.prior.validate();
    if (y.rows() != op.rows()) throw std::invalid_argument("run_badvamp: Y rows mismatch operator");
    const int n = op.cols();
    const int cols = static_cast<int>(y.cols());
    if (init.r1.rows() != n || init.r1.cols() != cols || init.gamma1.size() != cols)
        throw std::invalid_argument("run_badvamp: init state shape mismatch");
    if (!(init.hyper.gamma_w > 0.0))
        throw std::invalid_argument("run_badvamp: initial gamma_w must be > 0");

    const int q = op.unstructured ? 0 : op.num_params();
    const bool learn_op = init.hyper.learn_theta_a && (op.unstructured || q > 0);
    GramTables grams;
    if (!op.unstructured && q > 0 && learn_op) grams = precompute_grams(op, y);

    Eigen::MatrixXd r1 = init.r1;
    Eigen::VectorXd gamma1 = init.gamma1;
    Eigen::VectorXd theta = init.hyper.theta_a;
    Eigen::MatrixXd a_dense = init.hyper.a_dense;
    PriorParams prior = init.hyper.prior;
    double gamma_w = init.hyper.gamma_w;

    Eigen::VectorXd gamma2_prev;  // previous iteration, for symmetric damping
    Eigen::MatrixXd r2_prev;
    bool have_prev2 = false;

    RunResult res;
    kernels::DenoiseBatch den;
    kernels::LmmseBatch lmm;
    Eigen::MatrixXd x1_prev;
    Eigen::MatrixXd a_eval;
    Eigen::VectorXd eta1(cols), gamma2(cols), eta2(cols);
    Eigen::MatrixXd r2(n, cols);

    for (int t = 0; t < cfg.t_max; ++t) {
        // denoiser-side block: denoise, re-estimate gamma1, update the prior.
        // The prior M-step sees the gamma1 the cache was produced at; the
        // retuned gamma1 feeds the next pass and the extrinsic turn.
        const bool tune_now = cfg.auto_tune && t >= cfg.auto_tune_warmup;
        const bool learn_prior_now = prior.learns_anything() && t >= cfg.prior_warmup;
        for (int pass = 0; pass <= cfg.tau1_max; ++pass) {
            kernels::denoise_columns(prior, r1, gamma1, den);
            const Eigen::VectorXd gamma1_cache = gamma1;
            for (int l = 0; l < cols; ++l)
                eta1[l] = gamma1[l] / std::max(den.alpha[l], kAlphaFloor);
            if (tune_now) {
                for (int l = 0; l < cols; ++l)
                    gamma1[l] = retune_gamma1(den.xhat.col(l), r1.col(l), eta1[l], cfg.gamma_min,
                                              cfg.gamma_max);
            }
            if (learn_prior_now)
                prior = em_update_prior(prior, r1, gamma1_cache, den.columns());
            if (!tune_now && !learn_prior_now) break;  // further passes are idempotent
        }

        res.iterations = t + 1;
        double change = std::numeric_limits<double>::infinity();
        if (t > 0)
            change = (den.xhat - x1_prev).norm() / std::max(den.xhat.norm(), 1e-300);
        x1_prev = den.xhat;
        if (change <= cfg.tol) {
            res.converged = true;
            break;
        }

        // extrinsic turn towards the measurement side
        for (int l = 0; l < cols; ++l) {
            ExtrinsicMessage prev;
            const bool damp2 = cfg.symmetric_damping && have_prev2;
            if (damp2) {
                prev.gamma = gamma2_prev[l];
                prev.r = r2_prev.col(l);
            }
            const ExtrinsicMessage m2 =
                extrinsic(eta1[l], den.xhat.col(l), gamma1[l], r1.col(l), cfg.zeta, cfg.gamma_min,
                          cfg.gamma_max, damp2 ? &prev : nullptr);
            gamma2[l] = m2.gamma;
            r2.col(l) = m2.r;
        }

        // measurement-side block: LMMSE, re-estimate gamma2, update theta_A
        // and gamma_w; the operator eigendecomposition refreshes every pass
        for (int pass = 0; pass <= cfg.tau2_max; ++pass) {
            a_eval = op.unstructured ? a_dense : evaluate(op, theta);
            const Eigen::VectorXd tag =
                op.unstructured
                    ? Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(a_dense.data(),
                                                                        a_dense.size()))
                    : theta;
            const OperatorEig eig = eig_gram(a_eval, tag);
            require_current(eig, tag);
            const Eigen::MatrixXd aty = a_eval.transpose() * y;
            kernels::lmmse_columns(eig, aty, r2, gamma2, gamma_w, lmm);
            eta2 = lmm.eta2;
            // The re-estimated gamma2 drives further inner passes only. The
            // return extrinsic must use the (eta2, gamma2) pair of the
            // posterior it came from: a retuned gamma2 sits within
            // eta2^2 ||x2 - r2||^2 / N of eta2, which makes the extrinsic
            // mean blow up whenever the LMMSE barely moves r2 (always the
            // case on the null space of a wide operator).
            if (tune_now && pass < cfg.tau2_max) {
                for (int l = 0; l < cols; ++l)
                    gamma2[l] = retune_gamma2(lmm.x2.col(l), r2.col(l), eta2[l], cfg.gamma_min,
                                              cfg.gamma_max);
            }
            if (learn_op || init.hyper.learn_gamma_w) {
                EmWorkspace ws = make_workspace(eig, lmm.dsum, lmm.x2, eta2);
                if (learn_op) {
                    if (op.unstructured)
                        a_dense = em_update_A_unstructured(y, ws, a_dense);
                    else
                        theta = em_update_thetaA(grams, ws, theta);
                    a_eval = op.unstructured ? a_dense : evaluate(op, theta);
                }
                if (init.hyper.learn_gamma_w)
                    gamma_w = em_update_gamma_w(y, a_eval, ws, cfg.gamma_min, cfg.gamma_max);
            }
        }

        // damped return messages
        for (int l = 0; l < cols; ++l) {
            const ExtrinsicMessage prev1{gamma1[l], r1.col(l)};
            const ExtrinsicMessage m1 = extrinsic(eta2[l], lmm.x2.col(l), gamma2[l], r2.col(l),
                                                  cfg.zeta, cfg.gamma_min, cfg.gamma_max, &prev1);
            gamma1[l] = m1.gamma;
            r1.col(l) = m1.r;
        }

        BadVampIterInfo info;
        info.t = t;
        info.gamma1_mean = gamma1.mean();
        info.eta1_mean = eta1.mean();
        info.gamma2_mean = gamma2.mean();
        info.eta2_mean = eta2.mean();
        info.gamma_w = gamma_w;
        info.residual_fro = (y - a_eval * den.xhat).norm();
        info.x1_change = change;
        res.history.push_back(info);

        if (trace) {
            std::vector<ColumnState> states(cols);
            for (int l = 0; l < cols; ++l) {
                states[l].r1 = r1.col(l);
                states[l].gamma1 = gamma1[l];
                states[l].r2 = r2.col(l);
                states[l].gamma2 = gamma2[l];
                states[l].x1 = den.xhat.col(l);
                states[l].eta1 = eta1[l];
                states[l].x2 = lmm.x2.col(l);
                states[l].eta2 = eta2[l];
            }
            trace(t, states);
        }

        gamma2_prev = gamma2;
        r2_prev = r2;
        have_prev2 = true;

        if (!r1.allFinite() || !gamma1.allFinite() || !std::isfinite(gamma_w))
            throw NonFiniteState("run_badvamp: non-finite state at iteration " + std::to_string(t));
    }

    res.x_hat = x1_prev;
    res.theta_a_hat = theta;
    res.a_hat = op.unstructured ? a_dense : evaluate(op, theta);
    res.prior_hat = prior;
    res.gamma_w_hat = gamma_w;
    res.residual_db = residual_db_of(y, res.a_hat, res.x_hat);
    return res;
}

RunResult run_badvamp_with_restarts(const Eigen::MatrixXd& y, const AffineOperator& op,
                                    const SolverConfig& cfg, const PriorParams& prior0, Rng& rng,
                                    std::optional<int> sparsity_hint, bool learn_theta_a,
                                    std::optional<double> known_gamma_w) {
    // Restarts act as an annealing chain: the operator estimate carries over
    // while every message and hyperparameter re-initializes. Successive
    // attempts keep refining the operator even when the data fit already
    // sits at the noise floor, so the chain runs until the carried estimate
    // stabilizes at an acceptable fit (or the attempt budget runs out). A
    // chain that stabilizes above the fit threshold is stuck; the carried
    // operator gets jittered to hop basins.
    std::vector<RunResult> attempts;
    Eigen::VectorXd theta_carry;
    Eigen::MatrixXd a_carry;
    bool have_carry = false;
    bool jitter_next = false;
    int tried = 0;

    for (int attempt = 0; attempt <= cfg.restarts; ++attempt) {
        BadVampInit init = make_default_init(y, op, prior0, rng, sparsity_hint, cfg.gamma1_init);
        init.hyper.learn_theta_a = learn_theta_a;
        if (known_gamma_w) {
            init.hyper.gamma_w = *known_gamma_w;
            init.hyper.learn_gamma_w = false;
        }
        if (have_carry) {
            if (op.unstructured) {
                init.hyper.a_dense = a_carry;
                if (jitter_next) {
                    const double rms = a_carry.norm() / std::sqrt(double(a_carry.size()));
                    init.hyper.a_dense += rng.normal_matrix(op.rows(), op.cols(), 0.0, 0.35 * rms);
                }
            } else {
                init.hyper.theta_a = theta_carry;
                if (jitter_next && theta_carry.size() > 0) {
                    const double rms = theta_carry.norm() / std::sqrt(double(theta_carry.size()));
                    init.hyper.theta_a +=
                        rng.normal_vector(int(theta_carry.size()), 0.0, 0.35 * rms);
                }
            }
        }
        jitter_next = false;
        ++tried;
        try {
            RunResult r = run_badvamp(y, op, cfg, init);
            bool stable = false;
            if (have_carry) {
                const double denom = std::max(r.a_hat.norm(), 1e-300);
                stable = a_carry.size() == r.a_hat.size() &&
                         (r.a_hat - a_carry).norm() <= 3e-3 * denom;
            }
            a_carry = r.a_hat;
            if (!op.unstructured) theta_carry = r.theta_a_hat;
            have_carry = true;
            attempts.push_back(std::move(r));
            if (stable) {
                if (attempts.back().residual_db <= cfg.restart_residual_db) break;
                jitter_next = true;
            }
        } catch (const NonFiniteState&) {
            have_carry = false;  // next attempt draws a fresh random operator
        }
    }
    if (attempts.empty())
        throw NonFiniteState("run_badvamp_with_restarts: every attempt diverged");

    // The last attempt is the most annealed; spurious basins overfit the
    // noise by a dB or so, which rules out picking the raw residual minimum.
    // An earlier attempt wins only when it fit the data decisively better,
    // meaning the chain fell out of a good basin.
    std::size_t chosen = attempts.size() - 1;
    for (std::size_t i = 0; i + 1 < attempts.size(); ++i)
        if (attempts[i].residual_db < attempts[chosen].residual_db - 3.0) chosen = i;

    RunResult out = std::move(attempts[chosen]);
    out.restarts_used = tried - 1;
    return out;
}

}  // namespace badvamp
