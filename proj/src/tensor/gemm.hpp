#pragma once

#include <cstddef>

#include "odyn/real.hpp"

namespace odyn::tensor::detail {

/// Row-major C = alpha * op(A) * op(B) + beta * C, op(X) = X or X^T.
/// A is M x K after op, B is K x N after op.
void gemm(bool transpose_a, bool transpose_b, std::size_t m, std::size_t n, std::size_t k,
          real alpha, const real* a, const real* b, real beta, real* c);

}  // namespace odyn::tensor::detail
