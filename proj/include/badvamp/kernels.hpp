#pragma once

#include <Eigen/Dense>

#include "badvamp/denoisers.hpp"
#include "badvamp/operators.hpp"

// Data-parallel inner loops of the solvers. Each kernel comes in two
// variants: a plain serial reference and an OpenMP version parallelized over
// independent columns (or table entries). The parallel variants perform the
// identical per-item arithmetic and reduce in a fixed order, so both produce
// bitwise-equal results; the unqualified name dispatches on the configured
// thread count.
namespace badvamp::kernels {

struct DenoiseBatch {
    Eigen::MatrixXd xhat;   // N x L
    Eigen::MatrixXd deriv;  // N x L
    Eigen::MatrixXd resp;   // N x L
    Eigen::VectorXd alpha;  // L
    std::vector<DenoiseOutput> columns() const;  // per-column view used by EM
};

void denoise_columns_serial(const PriorParams& prior, const Eigen::MatrixXd& r,
                            const Eigen::VectorXd& gamma, DenoiseBatch& out);
void denoise_columns_parallel(const PriorParams& prior, const Eigen::MatrixXd& r,
                              const Eigen::VectorXd& gamma, DenoiseBatch& out);
void denoise_columns(const PriorParams& prior, const Eigen::MatrixXd& r,
                     const Eigen::VectorXd& gamma, DenoiseBatch& out);

struct LmmseBatch {
    Eigen::MatrixXd x2;    // N x L posterior means
    Eigen::VectorXd eta2;  // L posterior precisions
    Eigen::VectorXd dsum;  // N, sum over columns of the diagonal resolvents
                           // (dsum_n = sum_l 1/(gamma2_l + gamma_w s_n))
};

void lmmse_columns_serial(const OperatorEig& eig, const Eigen::MatrixXd& aty,
                          const Eigen::MatrixXd& r2, const Eigen::VectorXd& gamma2,
                          double gamma_w, LmmseBatch& out);
void lmmse_columns_parallel(const OperatorEig& eig, const Eigen::MatrixXd& aty,
                            const Eigen::MatrixXd& r2, const Eigen::VectorXd& gamma2,
                            double gamma_w, LmmseBatch& out);
void lmmse_columns(const OperatorEig& eig, const Eigen::MatrixXd& aty,
                   const Eigen::MatrixXd& r2, const Eigen::VectorXd& gamma2, double gamma_w,
                   LmmseBatch& out);

// h(i, j) = tr{gram[i][j] * s} for symmetric s.
void h_from_grams_serial(const GramTables& grams, const Eigen::MatrixXd& s, Eigen::MatrixXd& h);
void h_from_grams_parallel(const GramTables& grams, const Eigen::MatrixXd& s, Eigen::MatrixXd& h);
void h_from_grams(const GramTables& grams, const Eigen::MatrixXd& s, Eigen::MatrixXd& h);

}  // namespace badvamp::kernels
