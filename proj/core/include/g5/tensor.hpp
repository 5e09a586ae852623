#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "g5/errors.hpp"

namespace g5 {

// Dense row-major tensor of doubles.  Rank is 1 or 2 in practice; scalar
// results of loss reductions use shape {1}.  The gradient buffer is empty
// unless the tensor belongs to a trainable parameter or a tracked leaf.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor from_rows(std::size_t rows, std::size_t cols,
                          std::vector<double> values);
  static Tensor from_rows(
      std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double value);

  std::size_t numel() const;
  std::size_t rank() const { return shape.size(); }

  // 2-d view: rank-1 tensors count as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  void ensure_grad();
  void zero_grad();

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_str() const;
};

void check_finite(const Tensor& t, const char* where);

}  // namespace g5
