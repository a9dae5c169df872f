#include "rulemine/sparse.hpp"

namespace rulemine {

SparseRelationMatrix SparseRelationMatrix::from_pairs(int n, std::vector<std::pair<int, int>> cells) {
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  SparseRelationMatrix m;
  m.n = n;
  m.row_start.assign(static_cast<size_t>(n) + 1, 0);
  m.col.reserve(cells.size());
  for (const auto& [i, j] : cells) m.row_start[static_cast<size_t>(i) + 1]++;
  for (int i = 0; i < n; ++i) m.row_start[static_cast<size_t>(i) + 1] += m.row_start[static_cast<size_t>(i)];
  for (const auto& [i, j] : cells) m.col.push_back(j);
  return m;
}

SparseRelationMatrix SparseRelationMatrix::identity(int n) {
  SparseRelationMatrix m;
  m.n = n;
  m.row_start.resize(static_cast<size_t>(n) + 1);
  m.col.resize(static_cast<size_t>(n));
  for (int i = 0; i <= n; ++i) m.row_start[static_cast<size_t>(i)] = i;
  for (int i = 0; i < n; ++i) m.col[static_cast<size_t>(i)] = i;
  return m;
}

SparseRelationMatrix SparseRelationMatrix::transposed() const {
  std::vector<std::pair<int, int>> cells;
  cells.reserve(col.size());
  for (int i = 0; i < n; ++i) {
    for (const int* p = row_begin(i); p != row_end(i); ++p) cells.emplace_back(*p, i);
  }
  return from_pairs(n, std::move(cells));
}

}  // namespace rulemine
