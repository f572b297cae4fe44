#include "badvamp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace badvamp {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}  // namespace

std::uint64_t mix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t s = mix64(base);
    s = mix64(s ^ mix64(a + kGolden));
    s = mix64(s ^ mix64(b + 2 * kGolden));
    s = mix64(s ^ mix64(c + 3 * kGolden));
    return s;
}

double Rng::uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return radius * std::cos(kTwoPi * u2);
}

std::uint64_t Rng::integer(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::integer: bound must be positive");
    const std::uint64_t residue = std::numeric_limits<std::uint64_t>::max() % bound;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - residue;
    std::uint64_t v;
    do {
        v = gen_();
    } while (v > limit);
    return v % bound;
}

Eigen::VectorXd Rng::normal_vector(int n, double mean, double stddev) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = mean + stddev * normal();
    return v;
}

Eigen::MatrixXd Rng::normal_matrix(int rows, int cols, double mean, double stddev) {
    Eigen::MatrixXd m(rows, cols);
    // column-major fill order, part of the reproducibility contract
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = mean + stddev * normal();
    return m;
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
    if (k < 0 || k > n) throw std::invalid_argument("sample_without_replacement: need 0 <= k <= n");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(integer(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace badvamp
