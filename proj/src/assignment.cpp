#include "lens/assignment.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "lens/errors.hpp"

namespace lens {

Assignment assignment_min_cost(const Matrix& cost) {
  if (cost.rows() != cost.cols()) {
    throw ShapeError("assignment_min_cost: cost matrix must be square (" +
                     std::to_string(cost.rows()) + "x" +
                     std::to_string(cost.cols()) + ")");
  }
  if (cost.rows() == 0) {
    throw ShapeError("assignment_min_cost: empty cost matrix");
  }
  if (cost.rows() > 512) {
    throw DomainError("assignment_min_cost: n capped at 512, got " +
                      std::to_string(cost.rows()));
  }
  const int n = static_cast<int>(cost.rows());
  for (std::size_t i = 0; i < cost.size(); ++i) {
    const double c = cost.data()[i];
    if (!std::isfinite(c) || c < 0.0) {
      throw DomainError("assignment_min_cost: costs must be finite and nonnegative");
    }
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Potentials u/v over rows/columns; p[j] is the row matched to column j
  // (1-indexed with a virtual column 0).
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
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

  Assignment result;
  result.perm.assign(n, -1);
  for (int j = 1; j <= n; ++j) {
    result.perm[p[j] - 1] = j - 1;
  }
  for (int i = 0; i < n; ++i) {
    result.total_cost += cost(i, result.perm[i]);
  }
  return result;
}

}  // namespace lens
