#include "g5/tensor.hpp"

#include <cmath>
#include <sstream>

namespace g5 {

static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must not be empty");
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  std::size_t n = checked_numel(shape);
  t.shape = std::move(shape);
  t.data.assign(n, 0.0);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& x : t.data) x = value;
  return t;
}

Tensor Tensor::from_rows(std::size_t rows, std::size_t cols,
                         std::vector<double> values) {
  if (values.size() != rows * cols)
    throw ShapeError("from_rows: value count does not match rows*cols");
  Tensor t;
  t.shape = {rows, cols};
  t.data = std::move(values);
  return t;
}

Tensor Tensor::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
  Tensor t;
  const std::size_t cols = rows.size() == 0 ? 0 : rows.begin()->size();
  t.shape = {rows.size(), cols};
  t.data.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols)
      throw ShapeError("from_rows: ragged row lengths");
    t.data.insert(t.data.end(), row.begin(), row.end());
  }
  return t;
}

Tensor Tensor::scalar(double value) {
  Tensor t;
  t.shape = {1};
  t.data = {value};
  return t;
}

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::size_t Tensor::rows() const {
  if (shape.size() == 1) return 1;
  if (shape.size() == 2) return shape[0];
  throw ShapeError("rows(): tensor rank " + std::to_string(shape.size()) +
                   " has no 2-d view");
}

std::size_t Tensor::cols() const {
  if (shape.size() == 1) return shape[0];
  if (shape.size() == 2) return shape[1];
  throw ShapeError("cols(): tensor rank " + std::to_string(shape.size()) +
                   " has no 2-d view");
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data[r * cols() + c];
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
  if (!grad.empty()) grad.assign(grad.size(), 0.0);
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void check_finite(const Tensor& t, const char* where) {
  for (double x : t.data) {
    if (!std::isfinite(x))
      throw NumericError(std::string(where) + ": non-finite value");
  }
}

}  // namespace g5
