#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>
#include <random>

namespace badvamp {

// splitmix64 finalizer; good 64-bit mixing for seed derivation.
std::uint64_t mix64(std::uint64_t x);

// Stable sub-seed for a (grid point, trial, purpose) triple. Reruns of the
// same experiment reproduce every trial regardless of execution order.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                          std::uint64_t b = 0, std::uint64_t c = 0);

// mt19937_64 with an explicit Box-Muller transform. std::normal_distribution
// is not pinned down by the standard, so drawing normals by hand keeps
// generated instances bit-reproducible across toolchains.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform();  // strictly inside (0,1)
    double normal();
    std::uint64_t integer(std::uint64_t bound);  // unbiased in [0, bound)

    Eigen::VectorXd normal_vector(int n, double mean = 0.0, double stddev = 1.0);
    Eigen::MatrixXd normal_matrix(int rows, int cols, double mean = 0.0, double stddev = 1.0);

    // k distinct indices from {0,...,n-1}, returned sorted.
    std::vector<int> sample_without_replacement(int n, int k);

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace badvamp
