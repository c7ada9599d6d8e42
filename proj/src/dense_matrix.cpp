// SPDX-License-Identifier: Apache-2.0
#include "uotlab/dense_matrix.hpp"

#include <cmath>

namespace uotlab {

DenseMatrix DenseMatrix::from(int r, int c, std::initializer_list<double> values) {
  return from(r, c, std::vector<double>(values));
}

DenseMatrix DenseMatrix::from(int r, int c, const std::vector<double>& values) {
  if (static_cast<size_t>(r) * static_cast<size_t>(c) != values.size()) {
    throw ShapeError(strf("DenseMatrix::from: %d x %d needs %zu values, got %zu", r, c,
                          static_cast<size_t>(r) * c, values.size()));
  }
  DenseMatrix m(r, c);
  m.data.assign(values.begin(), values.end());
  m.require_finite("DenseMatrix::from");
  return m;
}

DenseMatrix DenseMatrix::row_vector(const std::vector<double>& values) {
  return from(1, static_cast<int>(values.size()), values);
}

bool DenseMatrix::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void DenseMatrix::require_finite(const char* what) const {
  if (!all_finite()) {
    throw NonFiniteError(strf("%s: matrix %d x %d contains NaN/Inf", what, rows, cols));
  }
}

}  // namespace uotlab
