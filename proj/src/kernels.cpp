#include "badvamp/kernels.hpp"

#include <stdexcept>

#include "badvamp/parallel.hpp"

namespace badvamp::kernels {

namespace {

void denoise_one(const PriorParams& prior, const Eigen::MatrixXd& r, const Eigen::VectorXd& gamma,
                 int l, DenoiseBatch& out) {
    const DenoiseOutput d = denoise(prior, r.col(l), gamma[l]);
    out.xhat.col(l) = d.xhat;
    out.deriv.col(l) = d.deriv;
    out.resp.col(l) = d.responsibilities;
    out.alpha[l] = d.alpha;
}

void lmmse_one(const OperatorEig& eig, const Eigen::MatrixXd& aty, const Eigen::MatrixXd& r2,
               const Eigen::VectorXd& gamma2, double gamma_w, int l, Eigen::MatrixXd& dmat,
               LmmseBatch& out) {
    const int n = static_cast<int>(eig.s.size());
    Eigen::VectorXd z = gamma2[l] * r2.col(l) + gamma_w * aty.col(l);
    Eigen::VectorXd w = eig.u.transpose() * z;
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d[i] = 1.0 / (gamma2[l] + gamma_w * eig.s[i]);
    out.x2.col(l).noalias() = eig.u * d.cwiseProduct(w);
    out.eta2[l] = static_cast<double>(n) / d.sum();
    dmat.col(l) = d;
}

}  // namespace

std::vector<DenoiseOutput> DenoiseBatch::columns() const {
    std::vector<DenoiseOutput> cols(xhat.cols());
    for (int l = 0; l < xhat.cols(); ++l) {
        cols[l].xhat = xhat.col(l);
        cols[l].deriv = deriv.col(l);
        cols[l].responsibilities = resp.col(l);
        cols[l].alpha = alpha[l];
    }
    return cols;
}

void denoise_columns_serial(const PriorParams& prior, const Eigen::MatrixXd& r,
                            const Eigen::VectorXd& gamma, DenoiseBatch& out) {
    const int cols = static_cast<int>(r.cols());
    out.xhat.resize(r.rows(), cols);
    out.deriv.resize(r.rows(), cols);
    out.resp.resize(r.rows(), cols);
    out.alpha.resize(cols);
    for (int l = 0; l < cols; ++l) denoise_one(prior, r, gamma, l, out);
}

void denoise_columns_parallel(const PriorParams& prior, const Eigen::MatrixXd& r,
                              const Eigen::VectorXd& gamma, DenoiseBatch& out) {
    const int cols = static_cast<int>(r.cols());
    out.xhat.resize(r.rows(), cols);
    out.deriv.resize(r.rows(), cols);
    out.resp.resize(r.rows(), cols);
    out.alpha.resize(cols);
#pragma omp parallel for schedule(static) num_threads(parallel::threads())
    for (int l = 0; l < cols; ++l) denoise_one(prior, r, gamma, l, out);
}

void denoise_columns(const PriorParams& prior, const Eigen::MatrixXd& r,
                     const Eigen::VectorXd& gamma, DenoiseBatch& out) {
    if (parallel::enabled() && r.cols() > 1)
        denoise_columns_parallel(prior, r, gamma, out);
    else
        denoise_columns_serial(prior, r, gamma, out);
}

void lmmse_columns_serial(const OperatorEig& eig, const Eigen::MatrixXd& aty,
                          const Eigen::MatrixXd& r2, const Eigen::VectorXd& gamma2,
                          double gamma_w, LmmseBatch& out) {
    const int n = static_cast<int>(eig.s.size());
    const int cols = static_cast<int>(r2.cols());
    out.x2.resize(n, cols);
    out.eta2.resize(cols);
    Eigen::MatrixXd dmat(n, cols);
    for (int l = 0; l < cols; ++l) lmmse_one(eig, aty, r2, gamma2, gamma_w, l, dmat, out);
    out.dsum = dmat.rowwise().sum();
}

void lmmse_columns_parallel(const OperatorEig& eig, const Eigen::MatrixXd& aty,
                            const Eigen::MatrixXd& r2, const Eigen::VectorXd& gamma2,
                            double gamma_w, LmmseBatch& out) {
    const int n = static_cast<int>(eig.s.size());
    const int cols = static_cast<int>(r2.cols());
    out.x2.resize(n, cols);
    out.eta2.resize(cols);
    Eigen::MatrixXd dmat(n, cols);
#pragma omp parallel for schedule(static) num_threads(parallel::threads())
    for (int l = 0; l < cols; ++l) lmmse_one(eig, aty, r2, gamma2, gamma_w, l, dmat, out);
    // fixed-order reduction, identical to the serial path
    out.dsum = dmat.rowwise().sum();
}

void lmmse_columns(const OperatorEig& eig, const Eigen::MatrixXd& aty, const Eigen::MatrixXd& r2,
                   const Eigen::VectorXd& gamma2, double gamma_w, LmmseBatch& out) {
    if (parallel::enabled() && r2.cols() > 1)
        lmmse_columns_parallel(eig, aty, r2, gamma2, gamma_w, out);
    else
        lmmse_columns_serial(eig, aty, r2, gamma2, gamma_w, out);
}

void h_from_grams_serial(const GramTables& grams, const Eigen::MatrixXd& s, Eigen::MatrixXd& h) {
    const int q = static_cast<int>(grams.gram.size());
    h.resize(q, q);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) h(i, j) = grams.gram[i][j].cwiseProduct(s).sum();
}

void h_from_grams_parallel(const GramTables& grams, const Eigen::MatrixXd& s, Eigen::MatrixXd& h) {
    const int q = static_cast<int>(grams.gram.size());
    h.resize(q, q);
#pragma omp parallel for collapse(2) schedule(static) num_threads(parallel::threads())
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) h(i, j) = grams.gram[i][j].cwiseProduct(s).sum();
}

void h_from_grams(const GramTables& grams, const Eigen::MatrixXd& s, Eigen::MatrixXd& h) {
    if (parallel::enabled() && grams.gram.size() > 1)
        h_from_grams_parallel(grams, s, h);
    else
        h_from_grams_serial(grams, s, h);
}

}  // namespace badvamp::kernels
