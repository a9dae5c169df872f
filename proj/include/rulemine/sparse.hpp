#pragma once

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

namespace rulemine {

/// Square boolean matrix in compressed-row form; every stored cell has
/// implicit value 1. Column indices are sorted and unique within each row,
/// so row iteration is O(nonzeros in row).
struct SparseRelationMatrix {
  int n = 0;
  std::vector<int> row_start;  // size n + 1
  std::vector<int> col;

  static SparseRelationMatrix from_pairs(int n, std::vector<std::pair<int, int>> cells);
  static SparseRelationMatrix identity(int n);

  bool has(int i, int j) const {
    const int* b = col.data() + row_start[static_cast<size_t>(i)];
    const int* e = col.data() + row_start[static_cast<size_t>(i) + 1];
    return std::binary_search(b, e, j);
  }
  int row_nnz(int i) const { return row_start[static_cast<size_t>(i) + 1] - row_start[static_cast<size_t>(i)]; }
  const int* row_begin(int i) const { return col.data() + row_start[static_cast<size_t>(i)]; }
  const int* row_end(int i) const { return col.data() + row_start[static_cast<size_t>(i) + 1]; }
  size_t nnz() const { return col.size(); }

  SparseRelationMatrix transposed() const;
};

/// Read view of a relation matrix with at most one cell masked out.
struct SparseView {
  const SparseRelationMatrix* m = nullptr;
  int skip_src = -1;
  int skip_dst = -1;

  bool skips(int i, int j) const { return i == skip_src && j == skip_dst; }

  template <typename F>
  void for_row(int i, F&& f) const {
    for (const int* p = m->row_begin(i); p != m->row_end(i); ++p) {
      if (i == skip_src && *p == skip_dst) continue;
      f(*p);
    }
  }

  std::vector<int> row_targets(int i) const {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(m->row_nnz(i)));
    for_row(i, [&](int j) { out.push_back(j); });
    return out;
  }
};

}  // namespace rulemine
