#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mlran {

using ColumnIndex = std::uint32_t;

// Row-major (CSR) presence matrix. Each row stores the strictly increasing
// list of columns whose value is 1; every other cell is 0.
class SparseBinaryMatrix {
 public:
  SparseBinaryMatrix() = default;
  explicit SparseBinaryMatrix(std::size_t n_cols) : n_cols_(n_cols) {}

  std::size_t rows() const noexcept { return row_ids_.size(); }
  std::size_t cols() const noexcept { return n_cols_; }
  std::size_t nnz() const noexcept { return indices_.size(); }

  // Appends a row. `active` must be strictly increasing and < cols();
  // throws InvalidArgument otherwise.
  void add_row(std::string row_id, std::span<const ColumnIndex> active);

  std::span<const ColumnIndex> row(std::size_t r) const noexcept {
    return {indices_.data() + offsets_[r], indices_.data() + offsets_[r + 1]};
  }
  const std::string& row_id(std::size_t r) const noexcept { return row_ids_[r]; }
  const std::vector<std::string>& row_ids() const noexcept { return row_ids_; }

  bool get(std::size_t r, ColumnIndex c) const noexcept;

  // Number of rows with each column active.
  std::vector<std::size_t> column_counts() const;

  // Keeps `columns` (strictly increasing) and renumbers them 0..k-1.
  SparseBinaryMatrix select_columns(std::span<const ColumnIndex> columns) const;
  // Keeps the given rows, in the given order.
  SparseBinaryMatrix select_rows(std::span<const std::size_t> rows) const;

  bool operator==(const SparseBinaryMatrix&) const = default;

 private:
  std::size_t n_cols_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<ColumnIndex> indices_;
  std::vector<std::string> row_ids_;
};

// MLRSPARSE v1 text format:
//   MLRSPARSE v1 rows=<n> cols=<m>
//   <sample_id>\t<i1>,<i2>,...
// Sample ids are backslash-escaped like vocabulary names.
void write_mlrsparse(std::ostream& out, const SparseBinaryMatrix& m);
std::string to_mlrsparse(const SparseBinaryMatrix& m);
SparseBinaryMatrix read_mlrsparse(std::istream& in);

// Backslash escaping for line-oriented files: '\\' -> "\\\\", tab -> "\\t",
// newline -> "\\n", carriage return -> "\\r".
std::string escape_field(std::string_view raw);
// Inverse of escape_field; throws FormatError on a dangling or unknown escape.
std::string unescape_field(std::string_view escaped);

}  // namespace mlran
