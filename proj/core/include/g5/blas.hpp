#pragma once

#include <cstddef>

namespace g5::blas {

// C = alpha * op(A) * op(B) + beta * C, row-major.
// op(A) is m x k, op(B) is k x n, C is m x n.  Leading dimensions are the
// allocated row strides of the untransposed storage.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, double alpha, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc);

// Pins the BLAS backend to one thread so reductions stay deterministic.
void init_single_thread();

}  // namespace g5::blas
