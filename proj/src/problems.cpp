#include "badvamp/problems.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "badvamp/assignment.hpp"

namespace badvamp {

namespace {

constexpr double kFloorRatio = 1e-10;  // -100 dB

double ratio_to_db(double ratio) { return 10.0 * std::log10(std::max(ratio, kFloorRatio)); }

Eigen::MatrixXd sparse_columns(int n, int l, int k, Rng& rng, MatrixXb& support) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, l);
    support = MatrixXb::Constant(n, l, false);
    for (int col = 0; col < l; ++col) {
        const std::vector<int> idx = rng.sample_without_replacement(n, k);
        for (int i : idx) {
            support(i, col) = true;
            x(i, col) = rng.normal();
        }
    }
    return x;
}

// Calibrates gamma_w to the realized signal power and draws the noise.
void add_noise(ProblemInstance& inst, std::optional<double> snr_db, Rng& rng) {
    const Eigen::MatrixXd z = inst.a_true * inst.x_true;
    inst.meta.snr_db = snr_db;
    if (!snr_db) {
        inst.y = z;
        inst.gamma_w_true = std::numeric_limits<double>::infinity();
        inst.meta.realized_snr_db = std::numeric_limits<double>::infinity();
        return;
    }
    const double ml = static_cast<double>(z.rows()) * z.cols();
    const double signal = z.squaredNorm();
    if (signal <= 0.0) throw std::invalid_argument("generator: zero signal, cannot set SNR");
    inst.gamma_w_true = ml * std::pow(10.0, *snr_db / 10.0) / signal;
    const Eigen::MatrixXd w = rng.normal_matrix(static_cast<int>(z.rows()),
                                                static_cast<int>(z.cols()), 0.0,
                                                std::sqrt(1.0 / inst.gamma_w_true));
    inst.y = z + w;
    inst.meta.realized_snr_db = 10.0 * std::log10(signal / w.squaredNorm());
}

Eigen::MatrixXd haar_orthogonal(int n, Rng& rng) {
    const Eigen::MatrixXd g = rng.normal_matrix(n, n);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::VectorXd d = qr.matrixQR().diagonal();
    // sign correction; plain QR of a Gaussian matrix is not Haar without it
    for (int i = 0; i < n; ++i)
        if (d[i] < 0) q.col(i) = -q.col(i);
    return q;
}

// Ridge-fallback symmetric solve used by the oracles.
Eigen::MatrixXd solve_sym(Eigen::MatrixXd lhs, const Eigen::MatrixXd& rhs) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(lhs);
    if (ldlt.info() == Eigen::Success) {
        Eigen::MatrixXd out = ldlt.solve(rhs);
        if (out.allFinite()) return out;
    }
    lhs.diagonal().array() += 1e-12 * lhs.trace() / lhs.rows();
    return lhs.ldlt().solve(rhs);
}

}  // namespace

std::string to_string(ProblemKind kind) {
    switch (kind) {
        case ProblemKind::kCsMu: return "csmu";
        case ProblemKind::kSelfCal: return "selfcal";
        case ProblemKind::kDlStructured: return "dl_structured";
        case ProblemKind::kDlUnstructured: return "dl_unstructured";
        case ProblemKind::kDlIllConditioned: return "dl_ill_conditioned";
    }
    throw std::logic_error("unknown ProblemKind");
}

ProblemKind problem_kind_from_string(const std::string& s) {
    if (s == "csmu") return ProblemKind::kCsMu;
    if (s == "selfcal") return ProblemKind::kSelfCal;
    if (s == "dl_structured") return ProblemKind::kDlStructured;
    if (s == "dl_unstructured") return ProblemKind::kDlUnstructured;
    if (s == "dl_ill_conditioned") return ProblemKind::kDlIllConditioned;
    throw std::invalid_argument("unknown problem kind: " + s);
}

ProblemInstance gen_csmu(int m, int n, int q, int k, double snr_db, double mu,
                         std::uint64_t seed) {
    if (m < 1 || n < 1 || q < 1 || k < 1 || k > n)
        throw std::invalid_argument("gen_csmu: invalid dimensions");
    Rng rng(seed);
    ProblemInstance inst;
    inst.meta = {ProblemKind::kCsMu, m, n, q, 1, k, seed, snr_db, mu, 1.0, 0.0};

    Eigen::MatrixXd a0 = rng.normal_matrix(m, n, mu, std::sqrt(20.0));
    std::vector<Eigen::MatrixXd> basis(q);
    for (int i = 0; i < q; ++i) basis[i] = rng.normal_matrix(m, n, mu, 1.0);
    inst.op = AffineOperator::structured(std::move(a0), std::move(basis));

    inst.theta_true = rng.normal_vector(q);
    inst.a_true = evaluate(inst.op, inst.theta_true);
    inst.x_true = sparse_columns(n, 1, k, rng, inst.support_true);
    add_noise(inst, snr_db, rng);
    return inst;
}

ProblemInstance gen_selfcal(int m, int n, int q, int k, std::uint64_t seed) {
    if (m < 1 || (m & (m - 1)) != 0)
        throw std::invalid_argument("gen_selfcal: M must be a power of two");
    if (q < 1 || q > m || k < 1 || k > n)
        throw std::invalid_argument("gen_selfcal: invalid dimensions");
    Rng rng(seed);
    ProblemInstance inst;
    inst.meta = {ProblemKind::kSelfCal, m, n, q, 1, k, seed, std::nullopt, 0.0, 1.0, 0.0};

    const Eigen::MatrixXd psi = rng.normal_matrix(m, n);
    const Eigen::MatrixXd hadamard = hadamard_sylvester(m);
    const std::vector<int> cols = rng.sample_without_replacement(m, q);
    std::vector<Eigen::MatrixXd> basis(q);
    for (int i = 0; i < q; ++i)
        basis[i] = hadamard.col(cols[i]).asDiagonal() * psi;
    inst.op = AffineOperator::structured(Eigen::MatrixXd::Zero(m, n), std::move(basis));

    inst.theta_true = rng.normal_vector(q);
    inst.a_true = evaluate(inst.op, inst.theta_true);
    inst.x_true = sparse_columns(n, 1, k, rng, inst.support_true);
    add_noise(inst, std::nullopt, rng);
    return inst;
}

ProblemInstance gen_dl(int n, int l, int k, DlMode mode, std::optional<double> snr_db,
                       double kappa, std::uint64_t seed) {
    if (n < 1 || l < 1 || k < 1 || k > n) throw std::invalid_argument("gen_dl: invalid dimensions");
    if (kappa < 1.0) throw std::invalid_argument("gen_dl: condition number must be >= 1");
    if (mode != DlMode::kIllConditioned && kappa != 1.0)
        throw std::invalid_argument("gen_dl: kappa only applies to the ill-conditioned mode");
    if (mode == DlMode::kIllConditioned && kappa > 1.0 && n < 2)
        throw std::invalid_argument("gen_dl: kappa > 1 needs N >= 2");

    Rng rng(seed);
    ProblemInstance inst;
    switch (mode) {
        case DlMode::kStructured: {
            inst.meta = {ProblemKind::kDlStructured, n, n, n, l, k, seed, snr_db, 0.0, 1.0, 0.0};
            std::vector<Eigen::MatrixXd> basis(n);
            for (int i = 0; i < n; ++i) basis[i] = rng.normal_matrix(n, n);
            inst.op = AffineOperator::structured(Eigen::MatrixXd::Zero(n, n), std::move(basis));
            inst.theta_true = rng.normal_vector(n);
            inst.a_true = evaluate(inst.op, inst.theta_true);
            break;
        }
        case DlMode::kUnstructured: {
            inst.meta = {ProblemKind::kDlUnstructured, n, n, n * n, l, k, seed, snr_db, 0.0, 1.0,
                         0.0};
            inst.op = AffineOperator::make_unstructured(n, n);
            inst.a_true = rng.normal_matrix(n, n);
            break;
        }
        case DlMode::kIllConditioned: {
            inst.meta = {ProblemKind::kDlIllConditioned, n, n, n * n, l, k, seed, snr_db, 0.0,
                         kappa, 0.0};
            inst.op = AffineOperator::make_unstructured(n, n);
            const Eigen::MatrixXd u = haar_orthogonal(n, rng);
            const Eigen::MatrixXd v = haar_orthogonal(n, rng);
            const double rho = n > 1 ? std::pow(kappa, 1.0 / (n - 1)) : 1.0;
            Eigen::VectorXd sv(n);
            double energy = 0.0;
            for (int i = 0; i < n; ++i) {
                sv[i] = std::pow(rho, i);
                energy += sv[i] * sv[i];
            }
            sv *= std::sqrt(static_cast<double>(n) / energy);
            inst.a_true = u * sv.asDiagonal() * v.transpose();
            break;
        }
    }
    inst.x_true = sparse_columns(n, l, k, rng, inst.support_true);
    add_noise(inst, snr_db, rng);
    return inst;
}

Eigen::VectorXd oracle_b_given_c(const ProblemInstance& inst) {
    if (inst.op.unstructured || inst.theta_true.size() == 0)
        throw std::invalid_argument("oracle_b_given_c: needs a structured operator");
    if (inst.y.cols() != 1)
        throw std::invalid_argument("oracle_b_given_c: defined for single-column problems");
    const int q = inst.op.num_params();
    const Eigen::VectorXd c = inst.x_true.col(0);
    const Eigen::VectorXd ytilde = inst.y.col(0) - inst.op.a0 * c;
    Eigen::MatrixXd phi(inst.op.rows(), q);
    for (int i = 0; i < q; ++i) phi.col(i) = inst.op.basis[i] * c;
    if (inst.noiseless()) return phi.colPivHouseholderQr().solve(ytilde);
    const double gw = inst.gamma_w_true;
    Eigen::MatrixXd lhs = gw * (phi.transpose() * phi);
    lhs.diagonal().array() += 1.0;  // N(0, I) prior on b
    return solve_sym(std::move(lhs), gw * (phi.transpose() * ytilde)).col(0);
}

Eigen::VectorXd oracle_c_given_b_support(const ProblemInstance& inst) {
    if (inst.y.cols() != 1)
        throw std::invalid_argument("oracle_c_given_b_support: defined for single-column problems");
    const int n = inst.op.cols();
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
        if (inst.support_true(i, 0)) idx.push_back(i);
    Eigen::MatrixXd as(inst.op.rows(), idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) as.col(j) = inst.a_true.col(idx[j]);

    Eigen::VectorXd cs;
    if (inst.noiseless()) {
        cs = as.colPivHouseholderQr().solve(inst.y.col(0));
    } else {
        const double gw = inst.gamma_w_true;
        Eigen::MatrixXd lhs = gw * (as.transpose() * as);
        lhs.diagonal().array() += 1.0;  // N(0, 1) prior on the active entries
        cs = solve_sym(std::move(lhs), gw * (as.transpose() * inst.y.col(0))).col(0);
    }
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    for (std::size_t j = 0; j < idx.size(); ++j) c[idx[j]] = cs[j];
    return c;
}

Eigen::MatrixXd oracle_a_given_x(const ProblemInstance& inst) {
    const Eigen::MatrixXd gram = inst.x_true * inst.x_true.transpose();
    return solve_sym(gram, inst.x_true * inst.y.transpose()).transpose();
}

Eigen::MatrixXd oracle_x_given_a_support(const ProblemInstance& inst) {
    const int n = inst.op.cols();
    const int cols = static_cast<int>(inst.y.cols());
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, cols);
    for (int l = 0; l < cols; ++l) {
        std::vector<int> idx;
        for (int i = 0; i < n; ++i)
            if (inst.support_true(i, l)) idx.push_back(i);
        if (idx.empty()) continue;
        Eigen::MatrixXd as(inst.a_true.rows(), idx.size());
        for (std::size_t j = 0; j < idx.size(); ++j) as.col(j) = inst.a_true.col(idx[j]);
        Eigen::VectorXd xs;
        if (inst.noiseless()) {
            xs = as.colPivHouseholderQr().solve(inst.y.col(l));
        } else {
            const double gw = inst.gamma_w_true;
            Eigen::MatrixXd lhs = gw * (as.transpose() * as);
            lhs.diagonal().array() += 1.0;
            xs = solve_sym(std::move(lhs), gw * (as.transpose() * inst.y.col(l))).col(0);
        }
        for (std::size_t j = 0; j < idx.size(); ++j) x(idx[j], l) = xs[j];
    }
    return x;
}

double nmse_db(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate) {
    const double denom = truth.squaredNorm();
    if (denom == 0.0) throw std::invalid_argument("nmse_db: zero ground truth");
    return ratio_to_db((truth - estimate).squaredNorm() / denom);
}

double nmse_scalar_ambiguity(const Eigen::MatrixXd& a_true, const Eigen::MatrixXd& a_hat) {
    const double denom = a_true.squaredNorm();
    if (denom == 0.0) throw std::invalid_argument("nmse_scalar_ambiguity: zero ground truth");
    const double hat_energy = a_hat.squaredNorm();
    if (hat_energy == 0.0) return ratio_to_db(1.0);
    const double inner = a_true.cwiseProduct(a_hat).sum();
    const double ratio = std::max(0.0, denom - inner * inner / hat_energy) / denom;
    return ratio_to_db(ratio);
}

double nmse_genperm_ambiguity(const Eigen::MatrixXd& a_true, const Eigen::MatrixXd& a_hat) {
    if (a_true.rows() != a_hat.rows() || a_true.cols() != a_hat.cols())
        throw std::invalid_argument("nmse_genperm_ambiguity: shape mismatch");
    const double denom = a_true.squaredNorm();
    if (denom == 0.0) throw std::invalid_argument("nmse_genperm_ambiguity: zero ground truth");
    const int n = static_cast<int>(a_true.cols());
    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i) {
        const double ti = a_true.col(i).squaredNorm();
        for (int j = 0; j < n; ++j) {
            const double hj = a_hat.col(j).squaredNorm();
            double c = ti;
            if (hj > 0.0) {
                const double inner = a_true.col(i).dot(a_hat.col(j));
                c = std::max(0.0, ti - inner * inner / hj);
            }
            cost(i, j) = c / denom;
        }
    }
    const std::vector<int> assign = solve_assignment(cost);
    return ratio_to_db(assignment_cost(cost, assign));
}

double rank1_nmse(const Eigen::VectorXd& b_true, const Eigen::VectorXd& c_true,
                  const Eigen::VectorXd& b_hat, const Eigen::VectorXd& c_hat) {
    const double denom = b_true.squaredNorm() * c_true.squaredNorm();
    if (denom == 0.0) throw std::invalid_argument("rank1_nmse: zero true outer product");
    const double num = b_hat.squaredNorm() * c_hat.squaredNorm() -
                       2.0 * b_hat.dot(b_true) * c_hat.dot(c_true) + denom;
    return ratio_to_db(std::max(num, 0.0) / denom);
}

Eigen::MatrixXd hadamard_sylvester(int m) {
    if (m < 1 || (m & (m - 1)) != 0)
        throw std::invalid_argument("hadamard_sylvester: m must be a power of two");
    Eigen::MatrixXd h(1, 1);
    h(0, 0) = 1.0;
    while (h.rows() < m) {
        const int k = static_cast<int>(h.rows());
        Eigen::MatrixXd next(2 * k, 2 * k);
        next.topLeftCorner(k, k) = h;
        next.topRightCorner(k, k) = h;
        next.bottomLeftCorner(k, k) = h;
        next.bottomRightCorner(k, k) = -h;
        h = std::move(next);
    }
    return h;
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json arr = nlohmann::json::array();
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
    return arr;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& arr, int rows, int cols) {
    if (static_cast<int>(arr.size()) != rows * cols)
        throw std::invalid_argument("instance_from_json: array size does not match dims");
    Eigen::MatrixXd m(rows, cols);
    int idx = 0;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = arr[idx++].get<double>();
    return m;
}

}  // namespace

nlohmann::json instance_to_json(const ProblemInstance& inst) {
    nlohmann::json j;
    j["kind"] = to_string(inst.meta.kind);
    j["m"] = inst.meta.m;
    j["n"] = inst.meta.n;
    j["q"] = inst.meta.q;
    j["l"] = inst.meta.l;
    j["k"] = inst.meta.k;
    j["seed"] = inst.meta.seed;
    j["mu"] = inst.meta.mu;
    j["kappa"] = inst.meta.kappa;
    if (inst.meta.snr_db)
        j["snr_db"] = *inst.meta.snr_db;
    else
        j["snr_db"] = nullptr;
    j["realized_snr_db"] =
        std::isfinite(inst.meta.realized_snr_db) ? nlohmann::json(inst.meta.realized_snr_db)
                                                 : nlohmann::json(nullptr);
    j["gamma_w_true"] =
        std::isfinite(inst.gamma_w_true) ? nlohmann::json(inst.gamma_w_true) : nlohmann::json(nullptr);
    j["y"] = matrix_to_json(inst.y);
    j["a_true"] = matrix_to_json(inst.a_true);
    j["x_true"] = matrix_to_json(inst.x_true);
    nlohmann::json sup = nlohmann::json::array();
    for (int i = 0; i < inst.support_true.rows(); ++i)
        for (int c = 0; c < inst.support_true.cols(); ++c)
            sup.push_back(inst.support_true(i, c) ? 1 : 0);
    j["support_true"] = sup;
    j["unstructured"] = inst.op.unstructured;
    if (!inst.op.unstructured) {
        j["a0"] = matrix_to_json(inst.op.a0);
        nlohmann::json basis = nlohmann::json::array();
        for (const auto& b : inst.op.basis) basis.push_back(matrix_to_json(b));
        j["basis"] = basis;
        j["theta_true"] = matrix_to_json(inst.theta_true);
    }
    return j;
}

ProblemInstance instance_from_json(const nlohmann::json& j) {
    ProblemInstance inst;
    inst.meta.kind = problem_kind_from_string(j.at("kind").get<std::string>());
    inst.meta.m = j.at("m").get<int>();
    inst.meta.n = j.at("n").get<int>();
    inst.meta.q = j.at("q").get<int>();
    inst.meta.l = j.at("l").get<int>();
    inst.meta.k = j.at("k").get<int>();
    inst.meta.seed = j.at("seed").get<std::uint64_t>();
    inst.meta.mu = j.at("mu").get<double>();
    inst.meta.kappa = j.at("kappa").get<double>();
    if (!j.at("snr_db").is_null()) inst.meta.snr_db = j.at("snr_db").get<double>();
    inst.meta.realized_snr_db = j.at("realized_snr_db").is_null()
                                    ? std::numeric_limits<double>::infinity()
                                    : j.at("realized_snr_db").get<double>();
    inst.gamma_w_true = j.at("gamma_w_true").is_null() ? std::numeric_limits<double>::infinity()
                                                       : j.at("gamma_w_true").get<double>();
    const int m = inst.meta.m, n = inst.meta.n, l = inst.meta.l;
    inst.y = matrix_from_json(j.at("y"), m, l);
    inst.a_true = matrix_from_json(j.at("a_true"), m, n);
    inst.x_true = matrix_from_json(j.at("x_true"), n, l);
    const nlohmann::json& sup = j.at("support_true");
    inst.support_true = MatrixXb(n, l);
    int idx = 0;
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < l; ++c) inst.support_true(i, c) = sup[idx++].get<int>() != 0;
    if (j.at("unstructured").get<bool>()) {
        inst.op = AffineOperator::make_unstructured(m, n);
    } else {
        Eigen::MatrixXd a0 = matrix_from_json(j.at("a0"), m, n);
        std::vector<Eigen::MatrixXd> basis;
        for (const auto& b : j.at("basis")) basis.push_back(matrix_from_json(b, m, n));
        inst.op = AffineOperator::structured(std::move(a0), std::move(basis));
        inst.theta_true = matrix_from_json(j.at("theta_true"), inst.meta.q, 1);
    }
    return inst;
}

}  // namespace badvamp
