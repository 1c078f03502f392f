#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gcot/numcore/tensor.hpp"

namespace gcot::num {

/// Compressed sparse row matrix. Column indices within a row are kept in
/// ascending order so row products accumulate in a fixed order.
class SparseMatrix {
 public:
  struct Entry {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseMatrix() = default;
  /// Entries may come in any order; duplicates are rejected.
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Entry> entries);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_cols(std::size_t r) const {
    return {col_index_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  SparseMatrix transposed() const;
  Tensor to_dense() const;

  /// The listed rows (ascending or not), all columns.
  SparseMatrix select_rows(std::span<const std::size_t> rows) const;

  /// Sub-block with the given (ascending) row and column index sets.
  /// Entries whose column is not listed are dropped.
  SparseMatrix block(std::span<const std::size_t> rows, std::span<const std::size_t> cols) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_index_;
  std::vector<double> values_;
};

}  // namespace gcot::num
