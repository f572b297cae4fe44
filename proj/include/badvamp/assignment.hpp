#pragma once

#include <Eigen/Dense>
#include <vector>

namespace badvamp {

// Exact minimum-cost assignment on a square cost matrix (shortest augmenting
// paths with potentials, O(n^3)). result[i] is the column matched to row i.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& assign);

}  // namespace badvamp
