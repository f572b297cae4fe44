#pragma once

#include <Eigen/Dense>
#include <vector>

namespace badvamp {

// Affine operator family A(theta) = A0 + sum_i theta_i * B_i with known
// basis matrices B_i. The unstructured variant treats every matrix entry as
// a free parameter; its basis (all M*N single-entry matrices) is implicit
// and never materialized. For the unstructured case, theta is vec(A) in
// column-major order.
struct AffineOperator {
    Eigen::MatrixXd a0;
    std::vector<Eigen::MatrixXd> basis;
    bool unstructured = false;

    int rows() const { return static_cast<int>(a0.rows()); }
    int cols() const { return static_cast<int>(a0.cols()); }
    int num_params() const {
        return unstructured ? rows() * cols() : static_cast<int>(basis.size());
    }

    // Throws std::invalid_argument when a basis matrix does not match a0.
    static AffineOperator structured(Eigen::MatrixXd a0, std::vector<Eigen::MatrixXd> basis);
    static AffineOperator make_unstructured(int m, int n);
};

// Products reused by every measurement-side EM step:
//   gram[i][j]  = B_j^T B_i    (N x N)
//   ygram[i]    = Y^T B_i      (L x N)
//   a0gram[i]   = A0^T B_i     (N x N)
struct GramTables {
    std::vector<std::vector<Eigen::MatrixXd>> gram;
    std::vector<Eigen::MatrixXd> ygram;
    std::vector<Eigen::MatrixXd> a0gram;
};

// Eigendecomposition of A(theta)^T A(theta), tagged with the theta it was
// computed at. Shared across all L columns, it turns the per-column LMMSE
// solves into diagonal inversions.
struct OperatorEig {
    Eigen::MatrixXd u;             // N x N orthogonal
    Eigen::VectorXd s;             // ascending eigenvalues, clamped to >= 0
    Eigen::VectorXd source_theta;  // theta (or vec(A) when unstructured)
};

Eigen::MatrixXd evaluate(const AffineOperator& op, const Eigen::VectorXd& theta);

// Throws std::logic_error for unstructured operators (the implicit basis
// would make the tables M*N x M*N), std::invalid_argument on bad shapes.
GramTables precompute_grams(const AffineOperator& op, const Eigen::MatrixXd& y);

OperatorEig eig_gram(const Eigen::MatrixXd& a);
OperatorEig eig_gram(const Eigen::MatrixXd& a, Eigen::VectorXd source_theta);

// Guards against using a decomposition computed for a different theta.
// Throws std::logic_error on mismatch.
void require_current(const OperatorEig& eig, const Eigen::VectorXd& theta);

}  // namespace badvamp
