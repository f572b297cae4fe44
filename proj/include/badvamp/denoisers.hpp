#pragma once

#include <Eigen/Dense>
#include <vector>

namespace badvamp {

enum class PriorFamily { kGaussian, kBernoulliGaussian };

// Spike-and-slab signal prior: each coordinate is zero with probability
// 1-lambda and N(mean, variance) with probability lambda. The Gaussian
// family is the lambda = 1 special case.
struct PriorParams {
    PriorFamily family = PriorFamily::kBernoulliGaussian;
    double lambda = 0.1;
    double mean = 0.0;
    double variance = 1.0;
    bool learn_lambda = false;
    bool learn_mean = false;
    bool learn_variance = false;

    bool learns_anything() const { return learn_lambda || learn_mean || learn_variance; }
    void validate() const;  // throws std::invalid_argument

    static PriorParams gaussian(double variance);
    static PriorParams bernoulli_gaussian(double lambda, double variance, double mean = 0.0);
};

struct DenoiseOutput {
    Eigen::VectorXd xhat;              // posterior mean
    Eigen::VectorXd deriv;             // d xhat_n / d r_n = gamma * Var(x_n | r_n)
    Eigen::VectorXd responsibilities;  // posterior activity probability
    double alpha = 0.0;                // average of deriv
};

// Posterior mean of x under the prior and pseudo-likelihood N(r; x, I/gamma),
// computed coordinatewise in the log domain. gamma may be as large as ~1e11.
DenoiseOutput denoise(const PriorParams& prior, const Eigen::VectorXd& r, double gamma);

// One M-step for the prior parameters given the per-column pseudo-posteriors
// produced by denoise() at (r1, gamma1). Only fields with learn flags set are
// updated. When every responsibility is zero the update is degenerate: the
// prior is returned unchanged and *degenerate is set.
PriorParams em_update_prior(const PriorParams& prior, const Eigen::MatrixXd& r1,
                            const Eigen::VectorXd& gamma1,
                            const std::vector<DenoiseOutput>& cache,
                            bool* degenerate = nullptr);

// Expected complete-data log prior of `candidate` under the pseudo-posteriors
// defined by `posterior_prior` and the cached responsibilities; this is the
// objective that em_update_prior maximizes over the candidate.
double expected_log_prior(const PriorParams& candidate, const PriorParams& posterior_prior,
                          const Eigen::MatrixXd& r1, const Eigen::VectorXd& gamma1,
                          const std::vector<DenoiseOutput>& cache);

// Re-estimate of the pseudo-prior precision from the posterior fit:
// 1/gamma = ||x1 - r1||^2 / N + 1/eta1, clamped to [gamma_min, gamma_max].
double retune_gamma1(const Eigen::VectorXd& x1, const Eigen::VectorXd& r1, double eta1,
                     double gamma_min, double gamma_max);

}  // namespace badvamp
