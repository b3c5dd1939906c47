#include <algorithm>

#include "gemm.hpp"
#include "odyn/ops.hpp"
#include "record.hpp"

namespace odyn::tensor {

using detail::make_result;
using detail::Node;

namespace {

struct Frame {
  std::size_t channels, height, width;        // the "image" side
  std::size_t kernel_h, kernel_w;
  std::size_t out_h, out_w;                   // the sliding-window grid
  ConvGeometry geo;

  std::size_t rows() const { return channels * kernel_h * kernel_w; }
  std::size_t cols() const { return out_h * out_w; }
};

// Output columns ox whose input column ox*s - pl + kx lies inside [0, width).
struct ColumnRange {
  std::size_t lo, hi;
};

ColumnRange valid_columns(const Frame& f, std::size_t kx) {
  const auto& g = f.geo;
  const auto s = static_cast<std::ptrdiff_t>(g.stride_w);
  const auto shift = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pad_left);
  const auto w = static_cast<std::ptrdiff_t>(f.width);
  // smallest ox with ox*s + shift >= 0, and one past the largest with < w
  const std::ptrdiff_t lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  const std::ptrdiff_t hi = w - shift <= 0 ? 0 : (w - shift + s - 1) / s;
  const auto clamp = [&](std::ptrdiff_t v) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(f.out_w)));
  };
  const std::size_t l = clamp(lo), h = clamp(hi);
  return {l, std::max(l, h)};
}

// col[(c, ky, kx), (oy, ox)] = img[c, oy*s - pt + ky, ox*s - pl + kx], zero outside.
void im2col(const Frame& f, const real* img, real* col) {
  const auto& g = f.geo;
  std::size_t r = 0;
  for (std::size_t c = 0; c < f.channels; ++c) {
    for (std::size_t ky = 0; ky < f.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < f.kernel_w; ++kx, ++r) {
        const auto [lo, hi] = valid_columns(f, kx);
        real* dst = col + r * f.cols();
        for (std::size_t oy = 0; oy < f.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ky) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          real* row = dst + oy * f.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(f.height)) {
            std::fill_n(row, f.out_w, real(0));
            continue;
          }
          const real* src = img + (c * f.height + static_cast<std::size_t>(iy)) * f.width;
          std::fill_n(row, lo, real(0));
          for (std::size_t ox = lo; ox < hi; ++ox) row[ox] = src[ox * g.stride_w + kx - g.pad_left];
          std::fill_n(row + hi, f.out_w - hi, real(0));
        }
      }
    }
  }
}

// Adjoint of im2col: img += scatter(col).
void col2im(const Frame& f, const real* col, real* img) {
  const auto& g = f.geo;
  std::size_t r = 0;
  for (std::size_t c = 0; c < f.channels; ++c) {
    for (std::size_t ky = 0; ky < f.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < f.kernel_w; ++kx, ++r) {
        const auto [lo, hi] = valid_columns(f, kx);
        const real* src = col + r * f.cols();
        for (std::size_t oy = 0; oy < f.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ky) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(f.height)) continue;
          real* dst = img + (c * f.height + static_cast<std::size_t>(iy)) * f.width;
          const real* row = src + oy * f.out_w;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * g.stride_w + kx - g.pad_left] += row[ox];
        }
      }
    }
  }
}

void check_geometry(const ConvGeometry& g, const char* op) {
  if (g.stride_h == 0 || g.stride_w == 0) {
    throw ShapeError(std::string(op) + ": strides must be >= 1");
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t n, std::size_t kernel, std::size_t stride,
                               std::size_t pad_begin, std::size_t pad_end) {
  const std::size_t padded = n + pad_begin + pad_end;
  if (kernel == 0 || stride == 0 || padded < kernel) {
    throw ShapeError("conv: kernel " + std::to_string(kernel) + " exceeds padded extent " +
                     std::to_string(padded) + " (input " + std::to_string(n) + ")");
  }
  return (padded - kernel) / stride + 1;
}

std::size_t transposed_output_extent(std::size_t n, std::size_t kernel, std::size_t stride,
                                     std::size_t pad_begin, std::size_t pad_end) {
  if (n == 0 || kernel == 0 || stride == 0) {
    throw ShapeError("transpconv: zero extent, kernel or stride");
  }
  const std::size_t full = (n - 1) * stride + kernel;
  if (full <= pad_begin + pad_end) {
    throw ShapeError("transpconv: cropping " + std::to_string(pad_begin + pad_end) +
                     " leaves no output from extent " + std::to_string(full));
  }
  return full - pad_begin - pad_end;
}

Tensor conv2d(const Tensor& x, const Tensor& weights, const Tensor& bias,
              const ConvGeometry& geometry) {
  detail::require_defined(x, "conv2d");
  detail::require_defined(weights, "conv2d");
  detail::require_defined(bias, "conv2d");
  check_geometry(geometry, "conv2d");
  if (x.rank() != 4 || weights.rank() != 4 || x.dim(1) != weights.dim(1) ||
      bias.size() != weights.dim(0)) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " incompatible with weights " +
                     to_string(weights.shape()) + " / bias " + to_string(bias.shape()));
  }
  const std::size_t batch = x.dim(0), out_ch = weights.dim(0);
  Frame f{x.dim(1),
          x.dim(2),
          x.dim(3),
          weights.dim(2),
          weights.dim(3),
          conv_output_extent(x.dim(2), weights.dim(2), geometry.stride_h, geometry.pad_top,
                             geometry.pad_bottom),
          conv_output_extent(x.dim(3), weights.dim(3), geometry.stride_w, geometry.pad_left,
                             geometry.pad_right),
          geometry};
  const std::size_t in_plane = f.channels * f.height * f.width;
  const std::size_t out_plane = out_ch * f.cols();
  std::vector<real> out(batch * out_plane);
  std::vector<real> col(f.rows() * f.cols());
  const auto xs = x.values();
  const auto ws = weights.values();
  const auto bs = bias.values();
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(f, xs.data() + b * in_plane, col.data());
    real* dst = out.data() + b * out_plane;
    for (std::size_t oc = 0; oc < out_ch; ++oc) std::fill_n(dst + oc * f.cols(), f.cols(), bs[oc]);
    detail::gemm(false, false, out_ch, f.cols(), f.rows(), real(1), ws.data(), col.data(),
                 real(1), dst);
  }
  return make_result(
      Shape{batch, out_ch, f.out_h, f.out_w}, std::move(out),
      {x.impl(), weights.impl(), bias.impl()},
      [f, batch, out_ch, in_plane, out_plane](Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        std::vector<real> col(f.rows() * f.cols());
        for (std::size_t b = 0; b < batch; ++b) {
          const real* dout = self.grad.data() + b * out_plane;
          if (pw.requires_grad) {
            im2col(f, px.data.data() + b * in_plane, col.data());
            detail::gemm(false, true, out_ch, f.rows(), f.cols(), real(1), dout, col.data(),
                         real(1), pw.grad_buffer().data());
          }
          if (px.requires_grad) {
            detail::gemm(true, false, f.rows(), f.cols(), out_ch, real(1), pw.data.data(), dout,
                         real(0), col.data());
            col2im(f, col.data(), px.grad_buffer().data() + b * in_plane);
          }
          if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t oc = 0; oc < out_ch; ++oc) {
              real acc = 0;
              for (std::size_t i = 0; i < f.cols(); ++i) acc += dout[oc * f.cols() + i];
              g[oc] += acc;
            }
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& weights, const Tensor& bias,
                        const ConvGeometry& geometry) {
  detail::require_defined(x, "conv_transpose2d");
  detail::require_defined(weights, "conv_transpose2d");
  detail::require_defined(bias, "conv_transpose2d");
  check_geometry(geometry, "conv_transpose2d");
  if (x.rank() != 4 || weights.rank() != 4 || x.dim(1) != weights.dim(0) ||
      bias.size() != weights.dim(1)) {
    throw ShapeError("conv_transpose2d: input " + to_string(x.shape()) +
                     " incompatible with weights " + to_string(weights.shape()) + " / bias " +
                     to_string(bias.shape()));
  }
  const std::size_t batch = x.dim(0), in_ch = x.dim(1), out_ch = weights.dim(1);
  const std::size_t out_h = transposed_output_extent(x.dim(2), weights.dim(2), geometry.stride_h,
                                                     geometry.pad_top, geometry.pad_bottom);
  const std::size_t out_w = transposed_output_extent(x.dim(3), weights.dim(3), geometry.stride_w,
                                                     geometry.pad_left, geometry.pad_right);
  // The output plays the role of a convolution input whose window grid is x.
  Frame f{out_ch, out_h, out_w, weights.dim(2), weights.dim(3), x.dim(2), x.dim(3), geometry};
  const std::size_t in_plane = in_ch * f.cols();
  const std::size_t out_plane = out_ch * out_h * out_w;
  std::vector<real> out(batch * out_plane);
  std::vector<real> col(f.rows() * f.cols());
  const auto xs = x.values();
  const auto ws = weights.values();
  const auto bs = bias.values();
  for (std::size_t b = 0; b < batch; ++b) {
    detail::gemm(true, false, f.rows(), f.cols(), in_ch, real(1), ws.data(),
                 xs.data() + b * in_plane, real(0), col.data());
    real* dst = out.data() + b * out_plane;
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
      std::fill_n(dst + oc * out_h * out_w, out_h * out_w, bs[oc]);
    }
    col2im(f, col.data(), dst);
  }
  return make_result(
      Shape{batch, out_ch, out_h, out_w}, std::move(out),
      {x.impl(), weights.impl(), bias.impl()},
      [f, batch, in_ch, out_ch, in_plane, out_plane](Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        std::vector<real> col(f.rows() * f.cols());
        const std::size_t plane = f.height * f.width;
        for (std::size_t b = 0; b < batch; ++b) {
          const real* dout = self.grad.data() + b * out_plane;
          if (px.requires_grad || pw.requires_grad) im2col(f, dout, col.data());
          if (px.requires_grad) {
            detail::gemm(false, false, in_ch, f.cols(), f.rows(), real(1), pw.data.data(),
                         col.data(), real(1), px.grad_buffer().data() + b * in_plane);
          }
          if (pw.requires_grad) {
            detail::gemm(false, true, in_ch, f.rows(), f.cols(), real(1),
                         px.data.data() + b * in_plane, col.data(), real(1),
                         pw.grad_buffer().data());
          }
          if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t oc = 0; oc < out_ch; ++oc) {
              real acc = 0;
              for (std::size_t i = 0; i < plane; ++i) acc += dout[oc * plane + i];
              g[oc] += acc;
            }
          }
        }
      });
}

Tensor maxpool2x2(const Tensor& x) {
  detail::require_defined(x, "maxpool2x2");
  if (x.rank() != 4) throw ShapeError("maxpool2x2: expected [B, C, H, W], got " + to_string(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h == 0 || w == 0) throw ShapeError("maxpool2x2: empty spatial extent " + to_string(x.shape()));
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  std::vector<real> out(planes * oh * ow);
  std::vector<std::uint32_t> argmax(out.size());
  const auto xs = x.values();
  for (std::size_t p = 0; p < planes; ++p) {
    const real* src = xs.data() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        // Replicated border cells duplicate an in-range cell, so clamping the
        // window to the image is the same as padding by replication.
        const std::size_t y1 = std::min(2 * oy + 1, h - 1), x1 = std::min(2 * ox + 1, w - 1);
        std::size_t best = 2 * oy * w + 2 * ox;
        for (std::size_t y = 2 * oy; y <= y1; ++y) {
          for (std::size_t xx = 2 * ox; xx <= x1; ++xx) {
            if (src[y * w + xx] > src[best]) best = y * w + xx;
          }
        }
        const std::size_t o = p * oh * ow + oy * ow + ox;
        out[o] = src[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return make_result(Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), {x.impl()},
                     [argmax = std::move(argmax), plane_in = h * w, plane_out = oh * ow](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t o = 0; o < argmax.size(); ++o) {
                         g[(o / plane_out) * plane_in + argmax[o]] += self.grad[o];
                       }
                     });
}

}  // namespace odyn::tensor
