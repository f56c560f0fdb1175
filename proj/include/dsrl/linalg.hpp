#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "dsrl/errors.hpp"

namespace dsrl {

// Dense row-major matrix of doubles. Desk-scale problems (T <= 64) keep
// everything dense and simple.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), a(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}
  Mat(int r, int c, std::vector<double> data) : rows(r), cols(c), a(std::move(data)) {
    if (a.size() != static_cast<size_t>(r) * static_cast<size_t>(c))
      throw DimensionError("Mat: data length does not match shape");
  }

  double& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  bool empty() const { return rows == 0 || cols == 0; }

  std::vector<double> row(int i) const {
    return std::vector<double>(a.begin() + static_cast<ptrdiff_t>(i) * cols,
                               a.begin() + static_cast<ptrdiff_t>(i + 1) * cols);
  }
};

inline Mat matmul(const Mat& A, const Mat& B) {
  if (A.cols != B.rows) throw DimensionError("matmul: inner dimensions differ");
  Mat C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i)
    for (int k = 0; k < A.cols; ++k) {
      const double aik = A.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < B.cols; ++j) C.at(i, j) += aik * B.at(k, j);
    }
  return C;
}

inline Mat transpose(const Mat& A) {
  Mat T(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) T.at(j, i) = A.at(i, j);
  return T;
}

}  // namespace dsrl
