#pragma once

#include <cstdint>

#include "g5/tensor.hpp"

namespace g5 {

// Sinusoidal index encoding: out[2t] = sin(index / 10000^(2t/dim)),
// out[2t+1] = cos(index / 10000^(2t/dim)).  dim must be even.  Used for the
// structural-role code, the closeness rank and the hop distance of each
// subgraph slot; all three share this one table shape.
void position_embedding(std::uint64_t index, std::size_t dim, double* out);
Tensor position_embedding(std::uint64_t index, std::size_t dim);

// Rows 0..max_index, one encoding per row.
Tensor position_embedding_table(std::uint64_t max_index, std::size_t dim);

}  // namespace g5
