#include "gemm.hpp"

#include <Eigen/Core>

namespace odyn::tensor::detail {

namespace {

using Matrix = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

}  // namespace

// Eigen is built without OpenMP here, so products run on the calling thread
// and results do not depend on the host core count.
void gemm(bool transpose_a, bool transpose_b, std::size_t m, std::size_t n, std::size_t k,
          real alpha, const real* a, const real* b, real beta, real* c) {
  if (m == 0 || n == 0) return;
  const auto mi = static_cast<Eigen::Index>(m), ni = static_cast<Eigen::Index>(n),
             ki = static_cast<Eigen::Index>(k);
  MutMap out(c, mi, ni);
  if (beta == real(0)) {
    out.setZero();
  } else if (beta != real(1)) {
    out *= beta;
  }
  if (k == 0) return;
  // A stored row-major as M x K, or K x M when transposed; B likewise.
  const ConstMap am(a, transpose_a ? ki : mi, transpose_a ? mi : ki);
  const ConstMap bm(b, transpose_b ? ni : ki, transpose_b ? ki : ni);
  if (transpose_a && transpose_b) {
    out.noalias() += alpha * (am.transpose() * bm.transpose());
  } else if (transpose_a) {
    out.noalias() += alpha * (am.transpose() * bm);
  } else if (transpose_b) {
    out.noalias() += alpha * (am * bm.transpose());
  } else {
    out.noalias() += alpha * (am * bm);
  }
}

}  // namespace odyn::tensor::detail
