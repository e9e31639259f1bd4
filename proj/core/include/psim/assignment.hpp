#pragma once

#include <vector>

#include <Eigen/Dense>

namespace psim {

enum class AssignmentSolver { kHungarian, kJonkerVolgenant };

/// Solution of a square linear sum assignment problem.
struct Assignment {
  /// row_to_col[i] is the column assigned to row i.
  std::vector<int> row_to_col;
  double cost = 0.0;
};

/// Kuhn-Munkres with row/column potentials, O(n^3). Entries equal to +inf are
/// treated as forbidden (replaced by a finite cost larger than any feasible
/// assignment before solving).
Assignment solve_hungarian(const Eigen::MatrixXd& cost);

/// Jonker-Volgenant (LAPJV): column reduction, reduction transfer, two rounds
/// of augmenting row reduction, then shortest augmenting paths.
Assignment solve_jonker_volgenant(const Eigen::MatrixXd& cost);

Assignment solve_assignment(const Eigen::MatrixXd& cost, AssignmentSolver solver);

}  // namespace psim
