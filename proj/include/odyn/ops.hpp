#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "odyn/tensor.hpp"

namespace odyn::tensor {

// Elementwise, equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real factor);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);

/// Concatenation along `axis`; all other extents must agree.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);

/// Row gather along axis 0: out[i] = a[index[i]].
Tensor gather_rows(const Tensor& a, std::span<const std::int32_t> index);
/// Row scatter-sum along axis 0: out[index[i]] += a[i]; rows never hit are zero.
Tensor scatter_add_rows(const Tensor& a, std::span<const std::int32_t> index,
                        std::size_t rows);
/// Broadcast [B, C] to [B, C, height, width].
Tensor expand_spatial(const Tensor& a, std::size_t height, std::size_t width);

Tensor matmul(const Tensor& a, const Tensor& b);
/// y = x W + b with x [batch, in], W [in, out], b [out].
Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias);

struct ConvGeometry {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_top = 0;
  std::size_t pad_bottom = 0;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
};

/// Output extent of a cross-correlation: floor((n + pads - k) / s) + 1.
/// Throws ShapeError when nonpositive.
std::size_t conv_output_extent(std::size_t n, std::size_t kernel, std::size_t stride,
                               std::size_t pad_begin, std::size_t pad_end);
/// Output extent of a transposed convolution: (n - 1) s + k - pads.
std::size_t transposed_output_extent(std::size_t n, std::size_t kernel, std::size_t stride,
                                     std::size_t pad_begin, std::size_t pad_end);

/// x [B, C, H, W], weights [OC, C, kh, kw], bias [OC].
Tensor conv2d(const Tensor& x, const Tensor& weights, const Tensor& bias,
              const ConvGeometry& geometry);
/// x [B, C, H, W], weights [C, OC, kh, kw], bias [OC]. Adjoint of conv2d in x;
/// paddings crop the full output.
Tensor conv_transpose2d(const Tensor& x, const Tensor& weights, const Tensor& bias,
                        const ConvGeometry& geometry);

/// 2x2 window, stride 2. Odd extents behave as if the last row/column were
/// replicated. Ties go to the first cell in row-major order.
Tensor maxpool2x2(const Tensor& x);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  real momentum = real(0.99);
  real epsilon = real(1e-5);
};

enum class Mode { train, eval };

/// Per-feature standardization. x is [B, F] (features) or [B, C, H, W]
/// (per channel). Train mode needs at least two samples per feature and
/// updates the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode);

inline constexpr real bce_epsilon = real(1e-7);

/// Mean of -p log q - (1-p) log(1-q) with q clamped to [eps, 1-eps].
Tensor bce_loss(const Tensor& target, const Tensor& prediction);
/// Mean of squared differences.
Tensor mse_loss(const Tensor& a, const Tensor& b);

}  // namespace odyn::tensor
