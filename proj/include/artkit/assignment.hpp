#pragma once

#include <Eigen/Core>

#include <vector>

namespace artkit {

/// Minimum-cost one-to-one assignment on a rectangular cost matrix.
/// Returns, per row, the assigned column or -1 when rows outnumber columns.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace artkit
