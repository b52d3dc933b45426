#pragma once

#include <vector>

#include "lens/matrix.hpp"

namespace lens {

struct Assignment {
  // perm[i] is the column assigned to row i.
  std::vector<int> perm;
  double total_cost = 0.0;
};

// Exact minimum-cost assignment (Hungarian algorithm, O(n^3)) on a square
// matrix of finite nonnegative costs. Capped at n = 512: exact transport is
// only needed at desk scale.
Assignment assignment_min_cost(const Matrix& cost);

}  // namespace lens
