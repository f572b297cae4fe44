// Compares the serial reference kernels against the OpenMP variants and
// times a full dictionary-learning solve at 1 vs all threads.

#include <omp.h>

#include <cstdio>
#include <functional>

#include "badvamp/badvamp.hpp"
#include "badvamp/kernels.hpp"
#include "badvamp/parallel.hpp"
#include "badvamp/problems.hpp"

namespace {

double time_of(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const double start = omp_get_wtime();
    for (int i = 0; i < reps; ++i) fn();
    return (omp_get_wtime() - start) / reps * 1e3;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-18s serial %9.3f ms   omp %9.3f ms   speedup %.2fx\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
    const int threads = argc > 1 ? std::atoi(argv[1]) : omp_get_max_threads();
    badvamp::parallel::set_threads(threads);
    std::printf("kernel benchmark, %d thread(s)\n\n", threads);

    badvamp::Rng rng(7);
    const int n = 128, l = 1024, q = 48;

    // denoise
    {
        const Eigen::MatrixXd r = rng.normal_matrix(n, l);
        const Eigen::VectorXd gamma = Eigen::VectorXd::Constant(l, 3.0);
        const auto prior = badvamp::PriorParams::bernoulli_gaussian(0.2, 1.0);
        badvamp::kernels::DenoiseBatch a, b;
        const double ts = time_of([&] { denoise_columns_serial(prior, r, gamma, a); }, 5);
        const double tp = time_of([&] { denoise_columns_parallel(prior, r, gamma, b); }, 5);
        report("denoise_columns", ts, tp);
        if (a.xhat != b.xhat) std::printf("  MISMATCH!\n");
    }

    // lmmse
    {
        const Eigen::MatrixXd a_op = rng.normal_matrix(n, n);
        const auto eig = badvamp::eig_gram(a_op);
        const Eigen::MatrixXd aty = rng.normal_matrix(n, l);
        const Eigen::MatrixXd r2 = rng.normal_matrix(n, l);
        const Eigen::VectorXd gamma2 = Eigen::VectorXd::Constant(l, 0.5);
        badvamp::kernels::LmmseBatch a, b;
        const double ts =
            time_of([&] { lmmse_columns_serial(eig, aty, r2, gamma2, 10.0, a); }, 5);
        const double tp =
            time_of([&] { lmmse_columns_parallel(eig, aty, r2, gamma2, 10.0, b); }, 5);
        report("lmmse_columns", ts, tp);
        if (a.x2 != b.x2 || a.dsum != b.dsum) std::printf("  MISMATCH!\n");
    }

    // H assembly
    {
        std::vector<Eigen::MatrixXd> basis(q);
        for (auto& m : basis) m = rng.normal_matrix(n, n);
        const auto op =
            badvamp::AffineOperator::structured(Eigen::MatrixXd::Zero(n, n), std::move(basis));
        const auto grams = badvamp::precompute_grams(op, rng.normal_matrix(n, 4));
        Eigen::MatrixXd s = rng.normal_matrix(n, n);
        s = (s + s.transpose()).eval();
        Eigen::MatrixXd ha, hb;
        const double ts = time_of([&] { badvamp::kernels::h_from_grams_serial(grams, s, ha); }, 5);
        const double tp =
            time_of([&] { badvamp::kernels::h_from_grams_parallel(grams, s, hb); }, 5);
        report("h_from_grams", ts, tp);
        if (ha != hb) std::printf("  MISMATCH!\n");
    }

    // end-to-end dictionary learning solve
    {
        const auto inst = badvamp::gen_dl(24, 400, 5, badvamp::DlMode::kUnstructured, 40.0, 1.0, 3);
        badvamp::SolverConfig cfg;
        cfg.t_max = 60;
        cfg.restarts = 0;
        auto prior = badvamp::PriorParams::bernoulli_gaussian(0.1, 1.0);
        prior.learn_lambda = true;
        prior.learn_variance = true;
        auto solve = [&] {
            badvamp::Rng solver_rng(11);
            (void)badvamp::run_badvamp_with_restarts(inst.y, inst.op, cfg, prior, solver_rng,
                                                     inst.meta.k);
        };
        badvamp::parallel::set_threads(1);
        const double ts = time_of(solve, 1);
        badvamp::parallel::set_threads(threads);
        const double tp = time_of(solve, 1);
        report("badvamp_dl_solve", ts, tp);
    }
    return 0;
}
