#include <stdexcept>
#include <string>

#include "odyn/pipeline.hpp"

namespace odyn::pipeline {

namespace ops = odyn::tensor;

namespace {

const sim::Step& step_at(const sim::Episode& ep, std::size_t t) {
  if (t >= ep.length()) {
    throw std::out_of_range("episode step " + std::to_string(t) + " of " + std::to_string(ep.length()));
  }
  return ep.steps[t];
}

}  // namespace

Tensor node_frames(const sim::Episode& ep, std::size_t t, const models::VariantTraits& traits) {
  const auto& s = step_at(ep, t);
  const std::size_t n = ep.num_objects, hw = ep.pixels(), c = traits.visual_channels;
  if (c != 5 && c != 1) throw std::invalid_argument("node_frames: unsupported channel count " + std::to_string(c));
  std::vector<real> v(n * c * hw);
  for (std::size_t i = 0; i < n; ++i) {
    real* base = v.data() + i * c * hw;
    const auto mask = ep.mask(t, i);
    if (c == 1) {
      for (std::size_t p = 0; p < hw; ++p) base[p] = mask[p];
      continue;
    }
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t ch = 0; ch < 3; ++ch) base[ch * hw + p] = s.rgb[p * 3 + ch];
      base[3 * hw + p] = mask[p];
      base[4 * hw + p] = s.depth[p];
    }
  }
  return Tensor(Shape{n, c, ep.height, ep.width}, std::move(v));
}

Tensor object_masks(const sim::Episode& ep, std::size_t t) {
  step_at(ep, t);
  const std::size_t n = ep.num_objects, hw = ep.pixels();
  std::vector<real> v(n * hw);
  for (std::size_t i = 0; i < n; ++i) {
    const auto mask = ep.mask(t, i);
    std::copy(mask.begin(), mask.end(), v.begin() + static_cast<std::ptrdiff_t>(i * hw));
  }
  return Tensor(Shape{n, 1, ep.height, ep.width}, std::move(v));
}

Tensor object_poses(const sim::Episode& ep, std::size_t t) {
  const auto& s = step_at(ep, t);
  const std::size_t n = ep.num_objects;
  std::vector<real> v(n * 6);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      v[i * 6 + k] = s.pos[i * 3 + k];
      v[i * 6 + 3 + k] = s.vel[i * 3 + k];
    }
  }
  return Tensor(Shape{n, 6}, std::move(v));
}

Tensor edge_poses(const sim::Episode& ep, std::size_t t) {
  const auto& s = step_at(ep, t);
  // First frame: no earlier position exists, so it repeats the current one.
  const auto& prev = t == 0 ? s : ep.steps[t - 1];
  const std::size_t n = ep.num_objects;
  std::vector<real> v;
  v.reserve(n * (n - 1) * 9);
  for (std::size_t snd = 0; snd < n; ++snd) {
    for (std::size_t rcv = 0; rcv < n; ++rcv) {
      if (snd == rcv) continue;
      for (std::size_t k = 0; k < 3; ++k) v.push_back(s.vel[snd * 3 + k]);
      for (std::size_t k = 0; k < 3; ++k) v.push_back(prev.pos[snd * 3 + k]);
      for (std::size_t k = 0; k < 3; ++k) v.push_back(s.pos[snd * 3 + k]);
    }
  }
  return Tensor(Shape{n * (n - 1), 9}, std::move(v));
}

std::vector<real> downsample_mask(std::span<const std::uint8_t> mask, std::size_t h, std::size_t w, std::size_t eh,
                                  std::size_t ew) {
  if (mask.size() != h * w || eh == 0 || ew == 0 || eh > h || ew > w) {
    throw std::invalid_argument("downsample_mask: cannot reduce " + std::to_string(h) + "x" + std::to_string(w) +
                                " (" + std::to_string(mask.size()) + " pixels) to " + std::to_string(eh) + "x" +
                                std::to_string(ew));
  }
  std::vector<real> out(eh * ew, real(0));
  for (std::size_t y = 0; y < eh; ++y) {
    const std::size_t y0 = y * h / eh, y1 = ((y + 1) * h + eh - 1) / eh;
    for (std::size_t x = 0; x < ew; ++x) {
      const std::size_t x0 = x * w / ew, x1 = ((x + 1) * w + ew - 1) / ew;
      bool any = false;
      for (std::size_t yy = y0; yy < y1 && !any; ++yy) {
        for (std::size_t xx = x0; xx < x1 && !any; ++xx) any = mask[yy * w + xx] != 0;
      }
      out[y * ew + x] = any ? real(1) : real(0);
    }
  }
  return out;
}

Tensor edge_masks(const sim::Episode& ep, std::size_t t, std::size_t eh, std::size_t ew) {
  step_at(ep, t);
  const std::size_t n = ep.num_objects;
  std::vector<std::vector<real>> small(n);
  for (std::size_t i = 0; i < n; ++i) small[i] = downsample_mask(ep.mask(t, i), ep.height, ep.width, eh, ew);
  std::vector<real> v;
  v.reserve(n * (n - 1) * eh * ew);
  for (std::size_t snd = 0; snd < n; ++snd) {
    for (std::size_t rcv = 0; rcv < n; ++rcv) {
      if (snd != rcv) v.insert(v.end(), small[snd].begin(), small[snd].end());
    }
  }
  return Tensor(Shape{n * (n - 1), 1, eh, ew}, std::move(v));
}

Tensor control(const sim::Episode& ep, std::size_t t) {
  const auto& s = step_at(ep, t);
  return Tensor(Shape{1, 6}, std::vector<real>(s.control.begin(), s.control.end()));
}

namespace {

void require_frame_size(const sim::Episode& ep, const ModelConfig& config) {
  if (ep.width != config.width || ep.height != config.height) {
    throw std::invalid_argument("episode frames are " + std::to_string(ep.width) + "x" + std::to_string(ep.height) +
                                " but the model expects " + std::to_string(config.width) + "x" +
                                std::to_string(config.height));
  }
  if (ep.num_objects == 0) throw std::invalid_argument("episode has no objects");
}

}  // namespace

AttributedGraph episode_to_graph(const sim::Episode& ep, std::size_t t, const ModelConfig& config) {
  require_frame_size(ep, config);
  const auto tr = models::traits(config.variant);
  const std::vector<std::size_t> counts{ep.num_objects};
  AttributedGraph g = tr.edges == models::EdgeKind::none ? graphnet::edgeless(counts) : graphnet::fully_connected(counts);
  g.nodes.visual = node_frames(ep, t, tr);
  if (tr.pose) g.nodes.pose = object_poses(ep, t);
  if (tr.edges == models::EdgeKind::pose) g.edges.pose = edge_poses(ep, t);
  if (tr.edges == models::EdgeKind::mask) {
    const auto spec = models::network_spec(config.preset, config.width, config.height);
    g.edges.mask = edge_masks(ep, t, spec.edge_height, spec.edge_width);
  }
  g.globals = control(ep, t);
  g.validate();
  return g;
}

std::vector<AttributedGraph> episode_to_graphs(const sim::Episode& ep, const ModelConfig& config) {
  std::vector<AttributedGraph> out;
  for (std::size_t t = 0; t < ep.length(); ++t) out.push_back(episode_to_graph(ep, t, config));
  return out;
}

models::StepTarget step_target(const sim::Episode& ep, std::size_t t, const ModelConfig& config) {
  require_frame_size(ep, config);
  const auto tr = models::traits(config.variant);
  models::StepTarget y;
  y.masks = object_masks(ep, t);
  if (tr.pose) y.poses = object_poses(ep, t);
  if (tr.edges == models::EdgeKind::pose) y.edges = edge_poses(ep, t);
  if (tr.edges == models::EdgeKind::mask) {
    const auto spec = models::network_spec(config.preset, config.width, config.height);
    y.edges = edge_masks(ep, t, spec.edge_height, spec.edge_width);
  }
  return y;
}

namespace {

Tensor stack_rows(std::span<const AttributedGraph> graphs, Tensor AttributedGraph::*field) {
  std::vector<Tensor> parts;
  for (const auto& g : graphs) {
    if ((g.*field).defined()) parts.push_back(g.*field);
  }
  if (parts.empty()) return {};
  if (parts.size() != graphs.size()) throw tensor::ShapeError("batch_graphs: attribute present in only some graphs");
  return parts.size() == 1 ? parts[0] : ops::concat(parts, 0);
}

template <typename Attrs>
Tensor stack_attr(std::span<const AttributedGraph> graphs, Attrs AttributedGraph::*group, Tensor Attrs::*field,
                  bool allow_empty_rows) {
  std::vector<Tensor> parts;
  Tensor first;
  std::size_t present = 0, needed = 0;
  for (const auto& g : graphs) {
    const Tensor& t = (g.*group).*field;
    const bool empty_graph = allow_empty_rows && g.num_edges() == 0;
    if (!empty_graph) ++needed;
    if (t.defined()) {
      ++present;
      if (!first.defined()) first = t;
      if (t.dim(0) > 0) parts.push_back(t);
    }
  }
  if (present == 0) return {};
  if (present < needed) throw tensor::ShapeError("batch_graphs: attribute present in only some graphs");
  // Every graph edgeless: keep the zero-row attribute so widths stay known.
  if (parts.empty()) return first;
  return parts.size() == 1 ? parts[0] : ops::concat(parts, 0);
}

}  // namespace

AttributedGraph batch_graphs(std::span<const AttributedGraph> graphs) {
  if (graphs.empty()) throw std::invalid_argument("batch_graphs: no graphs");
  AttributedGraph out;
  std::int32_t offset = 0;
  for (const auto& g : graphs) {
    g.validate();
    out.n_node.insert(out.n_node.end(), g.n_node.begin(), g.n_node.end());
    out.n_edge.insert(out.n_edge.end(), g.n_edge.begin(), g.n_edge.end());
    for (auto s : g.senders) out.senders.push_back(s + offset);
    for (auto r : g.receivers) out.receivers.push_back(r + offset);
    offset += static_cast<std::int32_t>(g.num_nodes());
  }
  out.globals = stack_rows(graphs, &AttributedGraph::globals);
  out.nodes.visual = stack_attr(graphs, &AttributedGraph::nodes, &graphnet::NodeAttrs::visual, false);
  out.nodes.pose = stack_attr(graphs, &AttributedGraph::nodes, &graphnet::NodeAttrs::pose, false);
  out.nodes.latent = stack_attr(graphs, &AttributedGraph::nodes, &graphnet::NodeAttrs::latent, false);
  out.edges.pose = stack_attr(graphs, &AttributedGraph::edges, &graphnet::EdgeAttrs::pose, true);
  out.edges.mask = stack_attr(graphs, &AttributedGraph::edges, &graphnet::EdgeAttrs::mask, true);
  out.edges.latent = stack_attr(graphs, &AttributedGraph::edges, &graphnet::EdgeAttrs::latent, true);
  out.validate();
  return out;
}

}  // namespace odyn::pipeline
