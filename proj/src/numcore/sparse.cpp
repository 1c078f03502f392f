#include "gcot/numcore/sparse.hpp"

#include <algorithm>

#include "gcot/error.hpp"

namespace gcot::num {

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Entry> entries)
    : rows_(rows), cols_(cols) {
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  row_ptr_.assign(rows + 1, 0);
  col_index_.reserve(entries.size());
  values_.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.row >= rows || e.col >= cols) {
      throw DimensionError("sparse entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                           ") outside (" + std::to_string(rows) + "×" + std::to_string(cols) + ")");
    }
    if (i > 0 && entries[i - 1].row == e.row && entries[i - 1].col == e.col) {
      throw DimensionError("duplicate sparse entry (" + std::to_string(e.row) + "," +
                           std::to_string(e.col) + ")");
    }
    ++row_ptr_[e.row + 1];
    col_index_.push_back(e.col);
    values_.push_back(e.value);
  }
  for (std::size_t r = 0; r < rows; ++r) row_ptr_[r + 1] += row_ptr_[r];
}

SparseMatrix SparseMatrix::transposed() const {
  std::vector<Entry> entries;
  entries.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    auto cs = row_cols(r);
    auto vs = row_values(r);
    for (std::size_t k = 0; k < cs.size(); ++k) entries.push_back({cs[k], r, vs[k]});
  }
  return SparseMatrix(cols_, rows_, std::move(entries));
}

Tensor SparseMatrix::to_dense() const {
  Tensor t(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    auto cs = row_cols(r);
    auto vs = row_values(r);
    for (std::size_t k = 0; k < cs.size(); ++k) t(r, cs[k]) = vs[k];
  }
  return t;
}

SparseMatrix SparseMatrix::select_rows(std::span<const std::size_t> rows) const {
  SparseMatrix out;
  out.rows_ = rows.size();
  out.cols_ = cols_;
  out.row_ptr_.assign(rows.size() + 1, 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= rows_) throw DimensionError("select_rows: row " + std::to_string(rows[i]) + " out of range");
    auto cs = row_cols(rows[i]);
    auto vs = row_values(rows[i]);
    out.col_index_.insert(out.col_index_.end(), cs.begin(), cs.end());
    out.values_.insert(out.values_.end(), vs.begin(), vs.end());
    out.row_ptr_[i + 1] = out.col_index_.size();
  }
  return out;
}

SparseMatrix SparseMatrix::block(std::span<const std::size_t> rows,
                                 std::span<const std::size_t> cols) const {
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= rows_) throw DimensionError("block row " + std::to_string(r) + " out of range");
    auto cs = row_cols(r);
    auto vs = row_values(r);
    for (std::size_t k = 0; k < cs.size(); ++k) {
      auto it = std::lower_bound(cols.begin(), cols.end(), cs[k]);
      if (it != cols.end() && *it == cs[k]) {
        entries.push_back({i, static_cast<std::size_t>(it - cols.begin()), vs[k]});
      }
    }
  }
  return SparseMatrix(rows.size(), cols.size(), std::move(entries));
}

}  // namespace gcot::num
