// eda/assignment.hpp
//
// Linear assignment on square cost matrices: exhaustive permutation search
// (lexicographically smallest optimum) and the O(n^3) Hungarian method.
// Both throw ConfigInvalid on a non-square or non-finite matrix.

#ifndef EDA_ASSIGNMENT_HPP_
#define EDA_ASSIGNMENT_HPP_

#include <Eigen/Dense>

#include <vector>

namespace eda {

struct Assignment {
  std::vector<int> row_to_col;
  double cost = 0.0;
};

// Enumerates all n! permutations in lexicographic order and keeps the first
// strict minimum of sum_i cost(i, perm[i]).
Assignment exhaustive_min_assignment(const Eigen::MatrixXd &cost);

// Kuhn-Munkres with potentials. Returns an optimal permutation; among ties
// the choice is deterministic but not necessarily lexicographic.
Assignment hungarian_min_assignment(const Eigen::MatrixXd &cost);

// Pads a rectangular matrix to square with `fill`.
Eigen::MatrixXd pad_square(const Eigen::MatrixXd &cost, double fill = 0.0);

}  // namespace eda

#endif  // EDA_ASSIGNMENT_HPP_
