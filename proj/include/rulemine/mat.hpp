#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace rulemine {

/// Dense row-major matrix of doubles. Row vectors are Mats with rows == 1.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
  double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }
  size_t size() const { return a.size(); }
  bool empty() const { return a.empty(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

// All kernels accumulate over the contraction index in ascending order for
// every output cell, so results are reproducible bit-for-bit.
void mm(const Mat& A, const Mat& B, Mat& out);          // out = A * B
void mm_add(const Mat& A, const Mat& B, Mat& out);      // out += A * B
void mm_abt_add(const Mat& A, const Mat& B, Mat& out);  // out += A * B^T
void mm_atb_add(const Mat& A, const Mat& B, Mat& out);  // out += A^T * B

bool all_finite(const Mat& m);

}  // namespace rulemine
