#include "badvamp/denoisers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace badvamp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

// sigmoid of (log_a - log_b), stable for both signs
double responsibility_from_logs(double log_a, double log_b) {
    if (log_a >= log_b) return 1.0 / (1.0 + std::exp(log_b - log_a));
    const double e = std::exp(log_a - log_b);
    return e / (1.0 + e);
}

}  // namespace

void PriorParams::validate() const {
    if (!(variance > 0.0)) throw std::invalid_argument("PriorParams: variance must be > 0");
    if (!(lambda > 0.0) || lambda > 1.0)
        throw std::invalid_argument("PriorParams: lambda must lie in (0, 1]");
    if (family == PriorFamily::kGaussian && lambda != 1.0)
        throw std::invalid_argument("PriorParams: Gaussian family requires lambda = 1");
}

PriorParams PriorParams::gaussian(double variance) {
    PriorParams p;
    p.family = PriorFamily::kGaussian;
    p.lambda = 1.0;
    p.variance = variance;
    p.validate();
    return p;
}

PriorParams PriorParams::bernoulli_gaussian(double lambda, double variance, double mean) {
    PriorParams p;
    p.family = PriorFamily::kBernoulliGaussian;
    p.lambda = lambda;
    p.variance = variance;
    p.mean = mean;
    p.validate();
    return p;
}

DenoiseOutput denoise(const PriorParams& prior, const Eigen::VectorXd& r, double gamma) {
    prior.validate();
    if (!(gamma > 0.0)) throw std::invalid_argument("denoise: gamma must be > 0");
    if (!r.allFinite()) throw std::invalid_argument("denoise: r has non-finite entries");

    const int n = static_cast<int>(r.size());
    const double v = prior.variance;
    const double m = prior.mean;
    const double lam = prior.lambda;
    const bool all_active = (prior.family == PriorFamily::kGaussian) || lam == 1.0;

    const double a = gamma + 1.0 / v;           // active-component posterior precision
    const double evidence_var = v + 1.0 / gamma;  // variance of r under the active component
    const double log_lam = std::log(lam);
    const double log_one_minus_lam = all_active ? 0.0 : std::log1p(-lam);

    DenoiseOutput out;
    out.xhat.resize(n);
    out.deriv.resize(n);
    out.responsibilities.resize(n);

    for (int i = 0; i < n; ++i) {
        const double ri = r[i];
        const double mu = (gamma * ri + m / v) / a;
        double pi = 1.0;
        if (!all_active) {
            const double log_act = log_lam + log_normal_pdf(ri, m, evidence_var);
            const double log_off = log_one_minus_lam + log_normal_pdf(ri, 0.0, 1.0 / gamma);
            pi = responsibility_from_logs(log_act, log_off);
        }
        const double xhat = pi * mu;
        const double var = pi / a + pi * (1.0 - pi) * mu * mu;
        out.xhat[i] = xhat;
        out.deriv[i] = gamma * var;
        out.responsibilities[i] = pi;
    }
    out.alpha = n > 0 ? out.deriv.mean() : 0.0;
    return out;
}

PriorParams em_update_prior(const PriorParams& prior, const Eigen::MatrixXd& r1,
                            const Eigen::VectorXd& gamma1,
                            const std::vector<DenoiseOutput>& cache, bool* degenerate) {
    prior.validate();
    const int cols = static_cast<int>(r1.cols());
    const int n = static_cast<int>(r1.rows());
    if (gamma1.size() != cols || static_cast<int>(cache.size()) != cols)
        throw std::invalid_argument("em_update_prior: column counts disagree");
    if (degenerate) *degenerate = false;
    if (!prior.learns_anything()) return prior;

    const double v = prior.variance;
    // fixed column order keeps the reduction deterministic
    double resp_sum = 0.0, first_moment = 0.0;
    for (int l = 0; l < cols; ++l) {
        const double a = gamma1[l] + 1.0 / v;
        for (int i = 0; i < n; ++i) {
            const double pi = cache[l].responsibilities[i];
            const double mu = (gamma1[l] * r1(i, l) + prior.mean / v) / a;
            resp_sum += pi;
            first_moment += pi * mu;
        }
    }

    if (resp_sum == 0.0) {
        if (degenerate) *degenerate = true;
        return prior;
    }

    PriorParams next = prior;
    if (prior.learn_lambda && prior.family != PriorFamily::kGaussian) {
        next.lambda = std::min(1.0, resp_sum / (static_cast<double>(n) * cols));
        next.lambda = std::max(next.lambda, 1e-300);
    }
    const double mean_used = prior.learn_mean ? first_moment / resp_sum : prior.mean;
    if (prior.learn_mean) next.mean = mean_used;
    if (prior.learn_variance) {
        double second_moment = 0.0;
        for (int l = 0; l < cols; ++l) {
            const double a = gamma1[l] + 1.0 / v;
            for (int i = 0; i < n; ++i) {
                const double pi = cache[l].responsibilities[i];
                const double mu = (gamma1[l] * r1(i, l) + prior.mean / v) / a;
                const double d = mu - mean_used;
                second_moment += pi * (1.0 / a + d * d);
            }
        }
        next.variance = second_moment / resp_sum;
        if (!(next.variance > 0.0)) {
            if (degenerate) *degenerate = true;
            return prior;
        }
    }
    return next;
}

double expected_log_prior(const PriorParams& candidate, const PriorParams& posterior_prior,
                          const Eigen::MatrixXd& r1, const Eigen::VectorXd& gamma1,
                          const std::vector<DenoiseOutput>& cache) {
    const int cols = static_cast<int>(r1.cols());
    const int n = static_cast<int>(r1.rows());
    const double vq = posterior_prior.variance;  // defines the pseudo-posterior moments
    const double vc = candidate.variance;
    const double log_lam = std::log(candidate.lambda);
    const double log_off = candidate.lambda < 1.0 ? std::log1p(-candidate.lambda)
                                                  : -std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (int l = 0; l < cols; ++l) {
        const double a = gamma1[l] + 1.0 / vq;
        for (int i = 0; i < n; ++i) {
            const double pi = cache[l].responsibilities[i];
            const double mu = (gamma1[l] * r1(i, l) + posterior_prior.mean / vq) / a;
            const double d = mu - candidate.mean;
            total += pi * (log_lam - 0.5 * (kLog2Pi + std::log(vc)) -
                           (1.0 / a + d * d) / (2.0 * vc));
            if (pi < 1.0) total += (1.0 - pi) * log_off;
        }
    }
    return total;
}

double retune_gamma1(const Eigen::VectorXd& x1, const Eigen::VectorXd& r1, double eta1,
                     double gamma_min, double gamma_max) {
    if (!(eta1 > 0.0)) throw std::invalid_argument("retune_gamma1: eta1 must be > 0");
    const double n = static_cast<double>(x1.size());
    const double inv = (x1 - r1).squaredNorm() / n + 1.0 / eta1;
    return std::clamp(1.0 / inv, gamma_min, gamma_max);
}

}  // namespace badvamp
