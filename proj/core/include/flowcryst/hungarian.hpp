#pragma once

#include <Eigen/Core>
#include <vector>

namespace flowcryst {

struct Assignment {
  std::vector<int> col_of_row;  ///< row i is matched to column col_of_row[i]
  double cost = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, O(n^3)).
Assignment solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace flowcryst
