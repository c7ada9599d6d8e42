// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_DENSE_MATRIX_HPP_
#define UOTLAB_DENSE_MATRIX_HPP_

#include <cstdlib>
#include <initializer_list>
#include <new>
#include <span>
#include <vector>

#include "uotlab/common.hpp"

namespace uotlab {

// Fixed 64-byte alignment for all matrix storage: SIMD kernels pick their
// code path from the runtime pointer alignment, so uniform alignment is a
// precondition for bitwise-reproducible numerics.
template <class T, std::size_t Alignment>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U, Alignment>&) noexcept {}
  template <class U>
  struct rebind {
    using other = AlignedAllocator<U, Alignment>;
  };
  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + Alignment - 1) / Alignment * Alignment;
    void* p = std::aligned_alloc(Alignment, bytes);
    if (p == nullptr) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }
  bool operator==(const AlignedAllocator&) const noexcept { return true; }
  bool operator!=(const AlignedAllocator&) const noexcept { return false; }
};

using AlignedVector = std::vector<double, AlignedAllocator<double, 64>>;

// Row-major dense matrix of 64-bit reals. The one tensor type of the
// project; batches are rows, coordinates are columns.
struct DenseMatrix {
  int rows = 0;
  int cols = 0;
  AlignedVector data;  // rows * cols entries, row-major

  DenseMatrix() = default;
  DenseMatrix(int r, int c)
      : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {
    if (r < 0 || c < 0) throw ShapeError(strf("DenseMatrix: negative shape %d x %d", r, c));
  }

  // Construction from explicit values rejects NaN/Inf.
  static DenseMatrix from(int r, int c, std::initializer_list<double> values);
  static DenseMatrix from(int r, int c, const std::vector<double>& values);
  static DenseMatrix row_vector(const std::vector<double>& values);

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  std::span<double> row(int r) { return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }

  size_t size() const { return data.size(); }
  bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const;
  // Throws NonFiniteError mentioning `what` when any entry is NaN/Inf.
  void require_finite(const char* what) const;
};

}  // namespace uotlab

#endif  // UOTLAB_DENSE_MATRIX_HPP_
