#pragma once

#include "zstad/common.hpp"

namespace zstad {

struct SymmetricEigen {
  Vec values;   // descending
  Mat vectors;  // column i pairs with values[i]
};

// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
// `tolerance` (relative to the matrix norm) or `max_sweeps` is exhausted.
SymmetricEigen jacobi_eigen(const Mat& a, double tolerance = 1e-12, int max_sweeps = 100);

}  // namespace zstad
