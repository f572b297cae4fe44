#include "badvamp/assignment.hpp"

#include <limits>
#include <stdexcept>

namespace badvamp {

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
    if (cost.rows() != cost.cols()) throw std::invalid_argument("solve_assignment: matrix not square");
    if (!cost.allFinite()) throw std::invalid_argument("solve_assignment: non-finite costs");
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();

    // column n is a virtual start column
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, -1);  // match[j] = row currently assigned to column j
    std::vector<int> way(n + 1, n);

    for (int i = 0; i < n; ++i) {
        match[n] = i;
        int j0 = n;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 0; j < n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != -1);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != n);
    }

    std::vector<int> assign(n, -1);
    for (int j = 0; j < n; ++j)
        if (match[j] >= 0) assign[match[j]] = j;
    return assign;
}

double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& assign) {
    double total = 0.0;
    for (int i = 0; i < static_cast<int>(assign.size()); ++i) total += cost(i, assign[i]);
    return total;
}

}  // namespace badvamp
