#include "psim/assignment.hpp"

#include <cmath>
#include <limits>

#include "psim/error.hpp"

namespace psim {
namespace {

constexpr const char* kModule = "ged-classical";

/// Copy of `cost` with +inf replaced by a value that no optimal assignment
/// would ever pick while a finite alternative exists.
Eigen::MatrixXd finite_costs(const Eigen::MatrixXd& cost) {
  if (cost.rows() != cost.cols()) {
    throw ArgumentError(kModule, "assignment cost matrix must be square");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < cost.size(); ++i) {
    const double c = cost.data()[i];
    if (std::isnan(c) || c == -std::numeric_limits<double>::infinity()) {
      throw ArgumentError(kModule, "assignment cost matrix holds NaN or -inf");
    }
    if (std::isfinite(c)) total += std::abs(c);
  }
  const double forbidden = 2.0 * total + 1.0;
  Eigen::MatrixXd out = cost;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out.data()[i])) out.data()[i] = forbidden;
  }
  return out;
}

double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& row_to_col) {
  double total = 0.0;
  for (std::size_t i = 0; i < row_to_col.size(); ++i) {
    total += cost(static_cast<Eigen::Index>(i), row_to_col[i]);
  }
  return total;
}

}  // namespace

Assignment solve_hungarian(const Eigen::MatrixXd& input) {
  const Eigen::MatrixXd a = finite_costs(input);
  const int n = static_cast<int>(a.rows());
  Assignment result;
  if (n == 0) return result;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // 1-based potentials; column 0 is a virtual column holding the row being
  // inserted.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
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

  result.row_to_col.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) result.row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  result.cost = assignment_cost(input, result.row_to_col);
  return result;
}

Assignment solve_jonker_volgenant(const Eigen::MatrixXd& input) {
  const Eigen::MatrixXd c = finite_costs(input);
  const int n = static_cast<int>(c.rows());
  Assignment result;
  if (n == 0) return result;
  if (n == 1) {
    result.row_to_col = {0};
    result.cost = input(0, 0);
    return result;
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<int> rowsol(n, -1), colsol(n, -1), free_rows(n), collist(n), matches(n, 0),
      pred(n);
  std::vector<double> v(n), d(n);

  // Column reduction.
  for (int j = n - 1; j >= 0; --j) {
    double min = c(0, j);
    int imin = 0;
    for (int i = 1; i < n; ++i) {
      if (c(i, j) < min) {
        min = c(i, j);
        imin = i;
      }
    }
    v[j] = min;
    if (++matches[imin] == 1) {
      rowsol[imin] = j;
      colsol[j] = imin;
    } else if (v[j] < v[rowsol[imin]]) {
      const int j1 = rowsol[imin];
      rowsol[imin] = j;
      colsol[j] = imin;
      colsol[j1] = -1;
    } else {
      colsol[j] = -1;
    }
  }

  // Reduction transfer.
  int numfree = 0;
  for (int i = 0; i < n; ++i) {
    if (matches[i] == 0) {
      free_rows[numfree++] = i;
    } else if (matches[i] == 1) {
      const int j1 = rowsol[i];
      double min = kInf;
      for (int j = 0; j < n; ++j) {
        if (j != j1 && c(i, j) - v[j] < min) min = c(i, j) - v[j];
      }
      if (std::isfinite(min)) v[j1] -= min;
    }
  }

  // Augmenting row reduction, two passes.
  for (int pass = 0; pass < 2; ++pass) {
    int k = 0;
    const int prvnumfree = numfree;
    numfree = 0;
    while (k < prvnumfree) {
      const int i = free_rows[k++];
      double umin = c(i, 0) - v[0];
      int j1 = 0;
      int j2 = -1;
      double usubmin = kInf;
      for (int j = 1; j < n; ++j) {
        const double h = c(i, j) - v[j];
        if (h < usubmin) {
          if (h >= umin) {
            usubmin = h;
            j2 = j;
          } else {
            usubmin = umin;
            umin = h;
            j2 = j1;
            j1 = j;
          }
        }
      }
      int i0 = colsol[j1];
      if (umin < usubmin) {
        v[j1] -= usubmin - umin;
      } else if (i0 >= 0 && j2 >= 0) {
        j1 = j2;
        i0 = colsol[j2];
      }
      rowsol[i] = j1;
      colsol[j1] = i;
      if (i0 >= 0) {
        rowsol[i0] = -1;
        if (umin < usubmin) {
          free_rows[--k] = i0;
        } else {
          free_rows[numfree++] = i0;
        }
      }
    }
  }

  // Augmentation: Dijkstra-like shortest augmenting path per free row.
  for (int f = 0; f < numfree; ++f) {
    const int freerow = free_rows[f];
    for (int j = 0; j < n; ++j) {
      d[j] = c(freerow, j) - v[j];
      pred[j] = freerow;
      collist[j] = j;
    }
    int low = 0, up = 0, last = 0, endofpath = -1;
    double min = 0.0;
    bool found = false;
    do {
      if (up == low) {
        last = low - 1;
        min = d[collist[up++]];
        for (int k = up; k < n; ++k) {
          const int j = collist[k];
          const double h = d[j];
          if (h <= min) {
            if (h < min) {
              up = low;
              min = h;
            }
            collist[k] = collist[up];
            collist[up++] = j;
          }
        }
        for (int k = low; k < up; ++k) {
          if (colsol[collist[k]] < 0) {
            endofpath = collist[k];
            found = true;
            break;
          }
        }
      }
      if (!found) {
        const int j1 = collist[low++];
        const int i = colsol[j1];
        const double h = c(i, j1) - v[j1] - min;
        for (int k = up; k < n; ++k) {
          const int j = collist[k];
          const double v2 = c(i, j) - v[j] - h;
          if (v2 < d[j]) {
            pred[j] = i;
            if (v2 == min) {
              if (colsol[j] < 0) {
                endofpath = j;
                found = true;
                break;
              }
              collist[k] = collist[up];
              collist[up++] = j;
            }
            d[j] = v2;
          }
        }
      }
    } while (!found);

    for (int k = 0; k <= last; ++k) {
      const int j1 = collist[k];
      v[j1] += d[j1] - min;
    }
    int i;
    do {
      i = pred[endofpath];
      colsol[endofpath] = i;
      const int j1 = endofpath;
      endofpath = rowsol[i];
      rowsol[i] = j1;
    } while (i != freerow);
  }

  result.row_to_col.assign(rowsol.begin(), rowsol.end());
  result.cost = assignment_cost(input, result.row_to_col);
  return result;
}

Assignment solve_assignment(const Eigen::MatrixXd& cost, AssignmentSolver solver) {
  return solver == AssignmentSolver::kHungarian ? solve_hungarian(cost)
                                                : solve_jonker_volgenant(cost);
}

}  // namespace psim
