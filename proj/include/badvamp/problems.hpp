#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "badvamp/operators.hpp"
#include "badvamp/rng.hpp"

namespace badvamp {

using MatrixXb = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class ProblemKind { kCsMu, kSelfCal, kDlStructured, kDlUnstructured, kDlIllConditioned };

std::string to_string(ProblemKind kind);
ProblemKind problem_kind_from_string(const std::string& s);

struct GenMeta {
    ProblemKind kind = ProblemKind::kCsMu;
    int m = 0, n = 0, q = 0, l = 0, k = 0;
    std::uint64_t seed = 0;
    std::optional<double> snr_db;  // empty for noiseless models
    double mu = 0.0;
    double kappa = 1.0;
    double realized_snr_db = std::numeric_limits<double>::infinity();
};

struct ProblemInstance {
    Eigen::MatrixXd y;           // M x L
    AffineOperator op;
    Eigen::VectorXd theta_true;  // empty in unstructured modes
    Eigen::MatrixXd a_true;      // evaluated true operator
    Eigen::MatrixXd x_true;      // N x L
    MatrixXb support_true;       // N x L
    double gamma_w_true = std::numeric_limits<double>::infinity();  // inf = noiseless
    GenMeta meta;

    bool noiseless() const { return !std::isfinite(gamma_w_true); }
};

struct Metrics {
    double nmse_b_db = std::numeric_limits<double>::quiet_NaN();
    double nmse_c_db = std::numeric_limits<double>::quiet_NaN();
    double nmse_a_db = std::numeric_limits<double>::quiet_NaN();
    double nmse_x_db = std::numeric_limits<double>::quiet_NaN();
    double rank1_nmse_db = std::numeric_limits<double>::quiet_NaN();
    bool success = false;
};

// Compressive sensing with matrix uncertainty: y = (A0 + sum b_i B_i) c + w,
// basis entries N(mu, 1), A0 entries N(mu, 20), b standard normal, c K-sparse.
ProblemInstance gen_csmu(int m, int n, int q, int k, double snr_db, double mu,
                         std::uint64_t seed);

// Self-calibration: y = Diag(H b) Psi c, noiseless; H holds q distinct columns
// of the m x m Sylvester-Hadamard matrix (m must be a power of two).
ProblemInstance gen_selfcal(int m, int n, int q, int k, std::uint64_t seed);

enum class DlMode { kStructured, kUnstructured, kIllConditioned };

// Dictionary learning with a square N x N dictionary and K-sparse columns.
// Structured mode draws A = sum_i b_i B_i with Q = N; the ill-conditioned
// mode fixes the singular value ratio to reach condition number kappa while
// keeping ||A||_F^2 = N. snr_db empty means noiseless.
ProblemInstance gen_dl(int n, int l, int k, DlMode mode, std::optional<double> snr_db,
                       double kappa, std::uint64_t seed);

// MMSE estimate of b given c (and the operator family), prior N(0, I).
Eigen::VectorXd oracle_b_given_c(const ProblemInstance& inst);
// MMSE estimate of c restricted to the true support, given the true operator.
Eigen::VectorXd oracle_c_given_b_support(const ProblemInstance& inst);
// Least-squares dictionary given the true X: Y X^T (X X^T)^{-1}.
Eigen::MatrixXd oracle_a_given_x(const ProblemInstance& inst);
// Per-column support-restricted MMSE of X given the true operator.
Eigen::MatrixXd oracle_x_given_a_support(const ProblemInstance& inst);

// Plain NMSE in dB, floored at -100 dB.
double nmse_db(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate);

// min over real scale of ||A - lambda Ahat||_F^2 / ||A||_F^2 in dB.
double nmse_scalar_ambiguity(const Eigen::MatrixXd& a_true, const Eigen::MatrixXd& a_hat);

// min over generalized permutations of ||A - Ahat P||_F^2 / ||A||_F^2 in dB,
// solved exactly: per-pair optimal scales + linear assignment over columns.
double nmse_genperm_ambiguity(const Eigen::MatrixXd& a_true, const Eigen::MatrixXd& a_hat);

// ||bhat chat^T - b c^T||_F^2 / ||b c^T||_F^2 in dB.
double rank1_nmse(const Eigen::VectorXd& b_true, const Eigen::VectorXd& c_true,
                  const Eigen::VectorXd& b_hat, const Eigen::VectorXd& c_hat);

// Sylvester construction; entries are +-1 and H^T H = m I.
Eigen::MatrixXd hadamard_sylvester(int m);

// JSON container with dims, seed and dense matrices as row-major arrays;
// schema documented in the README.
nlohmann::json instance_to_json(const ProblemInstance& inst);
ProblemInstance instance_from_json(const nlohmann::json& j);

}  // namespace badvamp
