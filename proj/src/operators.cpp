#include "badvamp/operators.hpp"

#include <stdexcept>
#include <utility>

namespace badvamp {

AffineOperator AffineOperator::structured(Eigen::MatrixXd a0, std::vector<Eigen::MatrixXd> basis) {
    for (const auto& b : basis) {
        if (b.rows() != a0.rows() || b.cols() != a0.cols())
            throw std::invalid_argument("AffineOperator: basis matrix shape differs from a0");
    }
    AffineOperator op;
    op.a0 = std::move(a0);
    op.basis = std::move(basis);
    op.unstructured = false;
    return op;
}

AffineOperator AffineOperator::make_unstructured(int m, int n) {
    if (m <= 0 || n <= 0) throw std::invalid_argument("AffineOperator: dims must be positive");
    AffineOperator op;
    op.a0 = Eigen::MatrixXd::Zero(m, n);
    op.unstructured = true;
    return op;
}

Eigen::MatrixXd evaluate(const AffineOperator& op, const Eigen::VectorXd& theta) {
    if (theta.size() != op.num_params())
        throw std::invalid_argument("evaluate: theta length does not match operator parameter count");
    if (op.unstructured) {
        return op.a0 + Eigen::Map<const Eigen::MatrixXd>(theta.data(), op.rows(), op.cols());
    }
    Eigen::MatrixXd a = op.a0;
    for (int i = 0; i < op.num_params(); ++i) a.noalias() += theta[i] * op.basis[i];
    return a;
}

GramTables precompute_grams(const AffineOperator& op, const Eigen::MatrixXd& y) {
    if (op.unstructured)
        throw std::logic_error("precompute_grams: unsupported for unstructured operators");
    if (y.rows() != op.rows())
        throw std::invalid_argument("precompute_grams: Y row count does not match operator");

    const int q = op.num_params();
    GramTables t;
    t.gram.resize(q);
    t.ygram.resize(q);
    t.a0gram.resize(q);
    for (int i = 0; i < q; ++i) {
        t.gram[i].resize(q);
        for (int j = 0; j < q; ++j) t.gram[i][j].noalias() = op.basis[j].transpose() * op.basis[i];
        t.ygram[i].noalias() = y.transpose() * op.basis[i];
        t.a0gram[i].noalias() = op.a0.transpose() * op.basis[i];
    }
    return t;
}

OperatorEig eig_gram(const Eigen::MatrixXd& a) { return eig_gram(a, Eigen::VectorXd()); }

OperatorEig eig_gram(const Eigen::MatrixXd& a, Eigen::VectorXd source_theta) {
    if (!a.allFinite()) throw std::invalid_argument("eig_gram: matrix has non-finite entries");
    const int n = static_cast<int>(a.cols());
    Eigen::MatrixXd gram(n, n);
    gram.setZero();
    gram.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose());
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success) throw std::runtime_error("eig_gram: eigendecomposition failed");

    OperatorEig e;
    e.u = es.eigenvectors();
    e.s = es.eigenvalues().cwiseMax(0.0);  // round-off can leave tiny negatives
    e.source_theta = std::move(source_theta);
    return e;
}

void require_current(const OperatorEig& eig, const Eigen::VectorXd& theta) {
    if (eig.source_theta.size() != theta.size() || eig.source_theta != theta)
        throw std::logic_error("OperatorEig is stale: it was computed at a different theta");
}

}  // namespace badvamp
