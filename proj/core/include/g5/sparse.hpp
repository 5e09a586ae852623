#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

#include "g5/errors.hpp"

namespace g5 {

// Compressed sparse row matrix, doubles.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> indptr;   // rows + 1 offsets
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  static CsrMatrix empty(std::size_t rows, std::size_t cols) {
    CsrMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.indptr.assign(rows + 1, 0);
    return m;
  }

  std::size_t nnz() const { return values.size(); }

  // Dense copy of one row into out[0..cols).
  void copy_row(std::size_t r, double* out) const {
    for (std::size_t j = 0; j < cols; ++j) out[j] = 0.0;
    for (std::size_t p = indptr[r]; p < indptr[r + 1]; ++p)
      out[indices[p]] = values[p];
  }

  // Sub-matrix whose rows are row_ids (duplicates allowed).
  CsrMatrix take_rows(const std::vector<std::uint32_t>& row_ids) const {
    CsrMatrix out;
    out.rows = row_ids.size();
    out.cols = cols;
    out.indptr.resize(row_ids.size() + 1);
    out.indptr[0] = 0;
    std::size_t total = 0;
    for (std::uint32_t r : row_ids) total += indptr[r + 1] - indptr[r];
    out.indices.reserve(total);
    out.values.reserve(total);
    for (std::size_t i = 0; i < row_ids.size(); ++i) {
      std::uint32_t r = row_ids[i];
      for (std::size_t p = indptr[r]; p < indptr[r + 1]; ++p) {
        out.indices.push_back(indices[p]);
        out.values.push_back(values[p]);
      }
      out.indptr[i + 1] = out.indices.size();
    }
    return out;
  }
};

// Builds a CSR matrix from per-row (column, value) pairs already sorted by row.
struct CsrBuilder {
  std::size_t cols;
  std::vector<std::size_t> indptr{0};
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  explicit CsrBuilder(std::size_t cols) : cols(cols) {}

  void add_entry(std::uint32_t col, double value) {
    if (col >= cols) throw ShapeError("csr entry column out of range");
    indices.push_back(col);
    values.push_back(value);
  }

  void finish_row() { indptr.push_back(indices.size()); }

  CsrMatrix build() {
    CsrMatrix m;
    m.rows = indptr.size() - 1;
    m.cols = cols;
    m.indptr = std::move(indptr);
    m.indices = std::move(indices);
    m.values = std::move(values);
    return m;
  }
};

}  // namespace g5
