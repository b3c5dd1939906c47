#include <algorithm>
#include <cmath>

#include "odyn/ops.hpp"
#include "record.hpp"

namespace odyn::tensor {

using detail::make_result;
using detail::Node;

Tensor bce_loss(const Tensor& target, const Tensor& prediction) {
  detail::require_defined(target, "bce_loss");
  detail::require_defined(prediction, "bce_loss");
  if (target.shape() != prediction.shape()) {
    throw ShapeError("bce_loss: target " + to_string(target.shape()) + " vs prediction " +
                     to_string(prediction.shape()));
  }
  if (target.size() == 0) throw ShapeError("bce_loss: empty operands");
  const auto p = target.values();
  const auto q = prediction.values();
  for (auto v : p) {
    if (!(v >= 0 && v <= 1)) {
      throw DomainError("bce_loss: target value " + std::to_string(v) + " outside [0, 1]");
    }
  }
  const real lo = bce_epsilon, hi = real(1) - bce_epsilon;
  double total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const real qc = std::clamp(q[i], lo, hi);
    total += -p[i] * std::log(qc) - (real(1) - p[i]) * std::log(real(1) - qc);
  }
  const real n = static_cast<real>(p.size());
  return make_result(
      Shape{1}, {static_cast<real>(total / static_cast<double>(p.size()))},
      {target.impl(), prediction.impl()}, [n, lo, hi](Node& self) {
        auto& pt = *self.parents[0];
        auto& pq = *self.parents[1];
        const real g = self.grad[0] / n;
        if (pq.requires_grad) {
          auto& gq = pq.grad_buffer();
          for (std::size_t i = 0; i < gq.size(); ++i) {
            const real q = pq.data[i];
            // The clamp is flat outside [eps, 1 - eps].
            if (q < lo || q > hi) continue;
            gq[i] += g * ((real(1) - pt.data[i]) / (real(1) - q) - pt.data[i] / q);
          }
        }
        if (pt.requires_grad) {
          auto& gt = pt.grad_buffer();
          for (std::size_t i = 0; i < gt.size(); ++i) {
            const real q = std::clamp(pq.data[i], lo, hi);
            gt[i] += g * (std::log(real(1) - q) - std::log(q));
          }
        }
      });
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
  detail::require_defined(a, "mse_loss");
  detail::require_defined(b, "mse_loss");
  if (a.shape() != b.shape()) {
    throw ShapeError("mse_loss: shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  if (a.size() == 0) throw ShapeError("mse_loss: empty operands");
  const auto x = a.values();
  const auto y = b.values();
  double total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    total += d * d;
  }
  const real n = static_cast<real>(x.size());
  return make_result(Shape{1}, {static_cast<real>(total / static_cast<double>(x.size()))},
                     {a.impl(), b.impl()}, [n](Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       const real g = real(2) * self.grad[0] / n;
                       if (pa.requires_grad) {
                         auto& ga = pa.grad_buffer();
                         for (std::size_t i = 0; i < ga.size(); ++i) {
                           ga[i] += g * (pa.data[i] - pb.data[i]);
                         }
                       }
                       if (pb.requires_grad) {
                         auto& gb = pb.grad_buffer();
                         for (std::size_t i = 0; i < gb.size(); ++i) {
                           gb[i] -= g * (pa.data[i] - pb.data[i]);
                         }
                       }
                     });
}

}  // namespace odyn::tensor
