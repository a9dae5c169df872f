#include "rulemine/mat.hpp"

#include <cmath>

namespace rulemine {

void mm(const Mat& A, const Mat& B, Mat& out) {
  assert(A.cols == B.rows);
  out = Mat(A.rows, B.cols);
  mm_add(A, B, out);
}

void mm_add(const Mat& A, const Mat& B, Mat& out) {
  assert(A.cols == B.rows && out.rows == A.rows && out.cols == B.cols);
  const int m = A.rows, kk = A.cols, n = B.cols;
  for (int i = 0; i < m; ++i) {
    double* orow = out.row(i);
    const double* arow = A.row(i);
    for (int k = 0; k < kk; ++k) {
      const double aik = arow[k];
      const double* brow = B.row(k);
      for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
}

void mm_abt_add(const Mat& A, const Mat& B, Mat& out) {
  assert(A.cols == B.cols && out.rows == A.rows && out.cols == B.rows);
  const int m = A.rows, kk = A.cols, n = B.rows;
  // transpose B so the inner loop is a vectorizable row accumulation
  Mat bt(kk, n);
  for (int j = 0; j < n; ++j) {
    const double* brow = B.row(j);
    for (int k = 0; k < kk; ++k) bt(k, j) = brow[k];
  }
  for (int i = 0; i < m; ++i) {
    const double* arow = A.row(i);
    double* orow = out.row(i);
    for (int k = 0; k < kk; ++k) {
      const double aik = arow[k];
      const double* brow = bt.row(k);
      for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
}

void mm_atb_add(const Mat& A, const Mat& B, Mat& out) {
  assert(A.rows == B.rows && out.rows == A.cols && out.cols == B.cols);
  const int kk = A.rows, m = A.cols, n = B.cols;
  for (int k = 0; k < kk; ++k) {
    const double* arow = A.row(k);
    const double* brow = B.row(k);
    for (int i = 0; i < m; ++i) {
      const double aki = arow[i];
      double* orow = out.row(i);
      for (int j = 0; j < n; ++j) orow[j] += aki * brow[j];
    }
  }
}

bool all_finite(const Mat& m) {
  for (double v : m.a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace rulemine
