#include <algorithm>
#include <cmath>

#include "gemm.hpp"
#include "odyn/ops.hpp"
#include "record.hpp"

namespace odyn::tensor {

using detail::make_result;
using detail::Node;
using detail::require_defined;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void accumulate(Node& parent, std::span<const real> g, real factor = real(1)) {
  if (!parent.requires_grad) return;
  auto& buf = parent.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += factor * g[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<real> out(a.size());
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a.impl(), b.impl()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<real> out(a.size());
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a.impl(), b.impl()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad, real(-1));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<real> out(a.size());
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a.impl(), b.impl()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& a, real factor) {
  require_defined(a, "scale");
  std::vector<real> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a.impl()},
                     [factor](Node& self) { accumulate(*self.parents[0], self.grad, factor); });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  real total = 0;
  for (auto v : a.values()) total += v;
  return make_result(Shape{1}, {total}, {a.impl()}, [](Node& self) {
    auto& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  if (a.size() == 0) throw ShapeError("mean of empty tensor " + to_string(a.shape()));
  return scale(sum(a), real(1) / static_cast<real>(a.size()));
}

Tensor relu(const Tensor& a) {
  require_defined(a, "relu");
  std::vector<real> out(a.size());
  const auto x = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0 ? x[i] : real(0);
  return make_result(a.shape(), std::move(out), {a.impl()}, [](Node& self) {
    auto& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p.data[i] > 0) g[i] += self.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  require_defined(a, "sigmoid");
  std::vector<real> out(a.size());
  const auto x = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Split form avoids overflow of exp for large |x|.
    if (x[i] >= 0) {
      out[i] = real(1) / (real(1) + std::exp(-x[i]));
    } else {
      const real e = std::exp(x[i]);
      out[i] = e / (real(1) + e);
    }
  }
  return make_result(a.shape(), std::move(out), {a.impl()}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const real s = self.data[i];
      g[i] += self.grad[i] * s * (real(1) - s);
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  std::vector<real> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {a.impl()},
                     [](Node& self) { accumulate(*self.parents[0], self.grad); });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     to_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw ShapeError("concat: shape mismatch " + to_string(first) + " vs " + to_string(s) +
                       " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  std::vector<std::size_t> widths;
  std::vector<detail::NodePtr> parents;
  for (const auto& p : parts) {
    widths.push_back(p.shape()[axis] * inner);
    parents.push_back(p.impl());
  }
  const std::size_t row = out_shape[axis] * inner;
  std::vector<real> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + o * widths[k], widths[k], out.begin() + o * row + offset);
    }
    offset += widths[k];
  }
  return make_result(std::move(out_shape), std::move(out), std::move(parents),
                     [widths, outer, row](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         auto& p = *self.parents[k];
                         if (p.requires_grad) {
                           auto& g = p.grad_buffer();
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t i = 0; i < widths[k]; ++i) {
                               g[o * widths[k] + i] += self.grad[o * row + off + i];
                             }
                           }
                         }
                         off += widths[k];
                       }
                     });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require_defined(a, "slice");
  const auto& s = a.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " invalid for " + to_string(s));
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t src_row = s[axis] * inner;
  const std::size_t width = (end - begin) * inner;
  const std::size_t start = begin * inner;
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  std::vector<real> out(outer * width);
  const auto src = a.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(src.begin() + o * src_row + start, width, out.begin() + o * width);
  }
  return make_result(std::move(out_shape), std::move(out), {a.impl()},
                     [outer, width, src_row, start](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t i = 0; i < width; ++i) {
                           g[o * src_row + start + i] += self.grad[o * width + i];
                         }
                       }
                     });
}

Tensor gather_rows(const Tensor& a, std::span<const std::int32_t> index) {
  require_defined(a, "gather_rows");
  const auto& s = a.shape();
  if (s.empty()) throw ShapeError("gather_rows: scalar operand");
  const std::size_t rows = s[0];
  const std::size_t width = rows ? a.size() / rows : numel(Shape(s.begin() + 1, s.end()));
  for (auto i : index) {
    if (i < 0 || static_cast<std::size_t>(i) >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(i) + " outside " + to_string(s));
    }
  }
  Shape out_shape = s;
  out_shape[0] = index.size();
  std::vector<real> out(index.size() * width);
  const auto src = a.values();
  for (std::size_t r = 0; r < index.size(); ++r) {
    std::copy_n(src.begin() + static_cast<std::size_t>(index[r]) * width, width,
                out.begin() + r * width);
  }
  std::vector<std::int32_t> idx(index.begin(), index.end());
  return make_result(std::move(out_shape), std::move(out), {a.impl()},
                     [idx = std::move(idx), width](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         const auto base = static_cast<std::size_t>(idx[r]) * width;
                         for (std::size_t i = 0; i < width; ++i) {
                           g[base + i] += self.grad[r * width + i];
                         }
                       }
                     });
}

Tensor scatter_add_rows(const Tensor& a, std::span<const std::int32_t> index,
                        std::size_t rows) {
  require_defined(a, "scatter_add_rows");
  const auto& s = a.shape();
  if (s.empty() || s[0] != index.size()) {
    throw ShapeError("scatter_add_rows: " + std::to_string(index.size()) +
                     " indices for operand " + to_string(s));
  }
  const std::size_t width = numel(Shape(s.begin() + 1, s.end()));
  for (auto i : index) {
    if (i < 0 || static_cast<std::size_t>(i) >= rows) {
      throw ShapeError("scatter_add_rows: index " + std::to_string(i) + " outside " +
                       std::to_string(rows) + " rows");
    }
  }
  Shape out_shape = s;
  out_shape[0] = rows;
  std::vector<real> out(rows * width, real(0));
  const auto src = a.values();
  for (std::size_t r = 0; r < index.size(); ++r) {
    const auto base = static_cast<std::size_t>(index[r]) * width;
    for (std::size_t i = 0; i < width; ++i) out[base + i] += src[r * width + i];
  }
  std::vector<std::int32_t> idx(index.begin(), index.end());
  return make_result(std::move(out_shape), std::move(out), {a.impl()},
                     [idx = std::move(idx), width](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         const auto base = static_cast<std::size_t>(idx[r]) * width;
                         for (std::size_t i = 0; i < width; ++i) {
                           g[r * width + i] += self.grad[base + i];
                         }
                       }
                     });
}

Tensor expand_spatial(const Tensor& a, std::size_t height, std::size_t width) {
  require_defined(a, "expand_spatial");
  if (a.rank() != 2) throw ShapeError("expand_spatial: expected [B, C], got " + to_string(a.shape()));
  const std::size_t plane = height * width;
  std::vector<real> out(a.size() * plane);
  const auto src = a.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::fill_n(out.begin() + i * plane, plane, src[i]);
  }
  return make_result(Shape{a.dim(0), a.dim(1), height, width}, std::move(out), {a.impl()},
                     [plane](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         real acc = 0;
                         for (std::size_t k = 0; k < plane; ++k) acc += self.grad[i * plane + k];
                         g[i] += acc;
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree for " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<real> out(m * n, real(0));
  detail::gemm(false, false, m, n, k, real(1), a.values().data(), b.values().data(), real(0),
               out.data());
  return make_result(Shape{m, n}, std::move(out), {a.impl(), b.impl()}, [m, k, n](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      detail::gemm(false, true, m, k, n, real(1), self.grad.data(), pb.data.data(), real(1),
                   pa.grad_buffer().data());
    }
    if (pb.requires_grad) {
      detail::gemm(true, false, k, n, m, real(1), pa.data.data(), self.grad.data(), real(1),
                   pb.grad_buffer().data());
    }
  });
}

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  require_defined(x, "dense");
  require_defined(weights, "dense");
  require_defined(bias, "dense");
  if (x.rank() != 2 || weights.rank() != 2 || x.dim(1) != weights.dim(0)) {
    throw ShapeError("dense: input " + to_string(x.shape()) + " does not match weights " +
                     to_string(weights.shape()));
  }
  const std::size_t m = x.dim(0), k = x.dim(1), n = weights.dim(1);
  if (bias.size() != n) {
    throw ShapeError("dense: bias " + to_string(bias.shape()) + " does not match weights " +
                     to_string(weights.shape()));
  }
  std::vector<real> out(m * n);
  const auto b = bias.values();
  for (std::size_t i = 0; i < m; ++i) std::copy(b.begin(), b.end(), out.begin() + i * n);
  detail::gemm(false, false, m, n, k, real(1), x.values().data(), weights.values().data(),
               real(1), out.data());
  return make_result(
      Shape{m, n}, std::move(out), {x.impl(), weights.impl(), bias.impl()},
      [m, k, n](Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        if (px.requires_grad) {
          detail::gemm(false, true, m, k, n, real(1), self.grad.data(), pw.data.data(), real(1),
                       px.grad_buffer().data());
        }
        if (pw.requires_grad) {
          detail::gemm(true, false, k, n, m, real(1), px.data.data(), self.grad.data(), real(1),
                       pw.grad_buffer().data());
        }
        if (pb.requires_grad) {
          auto& g = pb.grad_buffer();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
          }
        }
      });
}

}  // namespace odyn::tensor
