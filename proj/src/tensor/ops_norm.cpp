#include <cmath>

#include "odyn/ops.hpp"
#include "record.hpp"

namespace odyn::tensor {

using detail::make_result;
using detail::Node;

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode) {
  detail::require_defined(x, "batch_norm");
  if (x.rank() != 2 && x.rank() != 4) {
    throw ShapeError("batch_norm: expected [B, F] or [B, C, H, W], got " + to_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  const std::size_t plane = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  if (gamma.size() != channels || beta.size() != channels ||
      state.running_mean.size() != channels || state.running_var.size() != channels) {
    throw ShapeError("batch_norm: parameters " + to_string(gamma.shape()) +
                     " do not match input " + to_string(x.shape()));
  }
  if (mode == Mode::train && batch < 2) {
    throw ShapeError("batch_norm: train mode needs a batch of at least 2, got " +
                     to_string(x.shape()));
  }
  const std::size_t count = batch * plane;
  const auto xs = x.values();
  const auto gs = gamma.values();
  const auto bs = beta.values();

  std::vector<real> mu(channels), inv_std(channels);
  if (mode == Mode::train) {
    auto rm = state.running_mean.values();
    auto rv = state.running_var.values();
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const real* p = xs.data() + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double v = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const real* p = xs.data() + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const double var = v / static_cast<double>(count);
      mu[c] = static_cast<real>(m);
      inv_std[c] = static_cast<real>(1.0 / std::sqrt(var + state.epsilon));
      const double unbiased = v / static_cast<double>(count - 1);
      rm[c] = static_cast<real>(state.momentum * rm[c] + (1 - state.momentum) * m);
      rv[c] = static_cast<real>(state.momentum * rv[c] + (1 - state.momentum) * unbiased);
    }
  } else {
    const auto rm = state.running_mean.values();
    const auto rv = state.running_var.values();
    for (std::size_t c = 0; c < channels; ++c) {
      mu[c] = rm[c];
      inv_std[c] = real(1) / std::sqrt(rv[c] + state.epsilon);
    }
  }

  std::vector<real> xhat(x.size()), out(x.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xhat[base + i] = (xs[base + i] - mu[c]) * inv_std[c];
        out[base + i] = gs[c] * xhat[base + i] + bs[c];
      }
    }
  }

  const bool batch_stats = mode == Mode::train;
  return make_result(
      x.shape(), std::move(out), {x.impl(), gamma.impl(), beta.impl()},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels, plane, count,
       batch_stats](Node& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto& dy = self.grad;
        std::vector<real> sum_dy(channels, 0), sum_dy_xhat(channels, 0);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy[c] += dy[base + i];
              sum_dy_xhat[c] += dy[base + i] * xhat[base + i];
            }
          }
        }
        if (pg.requires_grad) {
          auto& g = pg.grad_buffer();
          for (std::size_t c = 0; c < channels; ++c) g[c] += sum_dy_xhat[c];
        }
        if (pb.requires_grad) {
          auto& g = pb.grad_buffer();
          for (std::size_t c = 0; c < channels; ++c) g[c] += sum_dy[c];
        }
        if (!px.requires_grad) return;
        auto& gx = px.grad_buffer();
        const auto& gamma_v = pg.data;
        const real n = static_cast<real>(count);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * plane;
            const real k = gamma_v[c] * inv_std[c];
            for (std::size_t i = 0; i < plane; ++i) {
              if (batch_stats) {
                gx[base + i] += k * (dy[base + i] - sum_dy[c] / n -
                                     xhat[base + i] * sum_dy_xhat[c] / n);
              } else {
                gx[base + i] += k * dy[base + i];
              }
            }
          }
        }
      });
}

}  // namespace odyn::tensor
