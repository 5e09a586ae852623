#include "g5/posenc.hpp"

#include <cmath>

#include "g5/errors.hpp"

namespace g5 {

void position_embedding(std::uint64_t index, std::size_t dim, double* out) {
  if (dim == 0 || dim % 2 != 0)
    throw ContractError("position_embedding: dim must be positive and even");
  const double x = static_cast<double>(index);
  for (std::size_t t = 0; 2 * t < dim; ++t) {
    const double freq =
        std::pow(10000.0, -static_cast<double>(2 * t) / static_cast<double>(dim));
    out[2 * t] = std::sin(x * freq);
    out[2 * t + 1] = std::cos(x * freq);
  }
}

Tensor position_embedding(std::uint64_t index, std::size_t dim) {
  Tensor t = Tensor::zeros({1, dim});
  position_embedding(index, dim, t.data.data());
  return t;
}

Tensor position_embedding_table(std::uint64_t max_index, std::size_t dim) {
  Tensor t = Tensor::zeros({static_cast<std::size_t>(max_index) + 1, dim});
  for (std::uint64_t i = 0; i <= max_index; ++i)
    position_embedding(i, dim, t.data.data() + i * dim);
  return t;
}

}  // namespace g5
