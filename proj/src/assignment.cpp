// src/assignment.cpp

#include "eda/assignment.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "eda/errors.hpp"

namespace eda {

namespace {

void require_square(const Eigen::MatrixXd &cost, const char *who) {
  if (cost.rows() != cost.cols())
    throw ShapeError(std::string(who) + ": cost matrix must be square");
}

}  // namespace

Assignment exhaustive_min_assignment(const Eigen::MatrixXd &cost) {
  require_square(cost, "exhaustive_min_assignment");
  if (!cost.allFinite()) throw ConfigInvalid("exhaustive_min_assignment: non-finite cost");
  const int n = static_cast<int>(cost.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Assignment best;
  best.cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
    if (c < best.cost) {
      best.cost = c;
      best.row_to_col = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (n == 0) best.cost = 0.0;
  return best;
}

Assignment hungarian_min_assignment(const Eigen::MatrixXd &cost) {
  require_square(cost, "hungarian_min_assignment");
  if (!cost.allFinite()) throw ConfigInvalid("hungarian_min_assignment: non-finite cost");
  const int n = static_cast<int>(cost.rows());
  Assignment out;
  if (n == 0) return out;
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials formulation; p[j] is the row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.row_to_col.assign(n, -1);
  for (int j = 1; j <= n; ++j) out.row_to_col[p[j] - 1] = j - 1;
  for (int i = 0; i < n; ++i) out.cost += cost(i, out.row_to_col[i]);
  return out;
}

Eigen::MatrixXd pad_square(const Eigen::MatrixXd &cost, double fill) {
  const auto n = std::max(cost.rows(), cost.cols());
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(n, n, fill);
  out.topLeftCorner(cost.rows(), cost.cols()) = cost;
  return out;
}

}  // namespace eda
