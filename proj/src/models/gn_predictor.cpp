#include <stdexcept>
#include <string>

#include "common.hpp"

namespace odyn::models {

namespace ops = odyn::tensor;
using graphnet::EdgeAttrs;
using graphnet::NodeAttrs;
using tensor::ShapeError;

namespace {

Tensor concat_nonempty(std::vector<Tensor> parts) {
  std::vector<Tensor> kept;
  for (auto& p : parts) {
    if (p.dim(1) > 0) kept.push_back(std::move(p));
  }
  return kept.size() == 1 ? kept[0] : ops::concat(kept, 1);
}

}  // namespace

GNPredictor::GNPredictor(const ModelConfig& config, Rng& rng)
    : config_(config), traits_(traits(config.variant)) {
  if (!traits_.graph_network) {
    throw std::invalid_argument("GNPredictor: " + std::string(variant_name(config.variant)) + " is not a graph-network variant");
  }
  const NetworkSpec spec = network_spec(config.preset, config.width, config.height);

  node_encoder_ = detail::network("node_encoder", spec.node_encoder,
                                  Shape{traits_.visual_channels, config.height, config.width}, rng);
  latent_map_ = node_encoder_.output_shape();
  visual_width_ = ops::numel(latent_map_);
  if (traits_.pose) {
    pose_encoder_ = detail::network("pose_encoder", spec.pose_encoder, Shape{6}, rng);
    pose_width_ = pose_encoder_.output_shape()[0];
  }
  node_width_ = visual_width_ + pose_width_;

  if (traits_.edges == EdgeKind::pose) {
    edge_encoder_ = detail::network("edge_encoder", spec.edge_encoder, Shape{9}, rng);
    edge_width_ = edge_encoder_.output_shape()[0];
  } else if (traits_.edges == EdgeKind::mask) {
    edge_encoder_ = detail::network("edge_encoder", spec.edge_cnn_encoder,
                                    Shape{1, spec.edge_height, spec.edge_width}, rng);
    edge_width_ = ops::numel(edge_encoder_.output_shape());
  }

  control_encoder_ = detail::network("control_encoder", spec.control_encoder, Shape{6}, rng);
  global_width_ = control_encoder_.output_shape()[0];

  if (edge_width_ > 0) {
    core_edge_ = ops::Sequential("core_edge", detail::mlp(spec.core_edge_hidden, edge_width_),
                                 Shape{2 * edge_width_ + 4 * node_width_ + global_width_}, rng);
  }
  core_node_ = ops::Sequential("core_node", detail::mlp(spec.core_node_hidden, node_width_),
                               Shape{edge_width_ + 2 * node_width_ + global_width_}, rng);
  core_global_ = detail::network("core_global", spec.core_global, Shape{edge_width_ + node_width_ + global_width_}, rng);
  if (core_global_.output_shape()[0] != global_width_) {
    throw ShapeError("GNPredictor: core global width must equal the control latent width");
  }

  node_decoder_ = detail::network("node_decoder", spec.node_decoder,
                                  Shape{latent_map_[0] + pose_width_, latent_map_[1], latent_map_[2]}, rng);
  if (traits_.pose) pose_decoder_ = detail::network("pose_decoder", spec.pose_decoder, Shape{node_width_}, rng);
  if (traits_.edges == EdgeKind::pose) {
    edge_decoder_ = detail::network("edge_decoder", spec.edge_decoder, Shape{edge_width_}, rng);
  } else if (traits_.edges == EdgeKind::mask) {
    edge_decoder_ = detail::network("edge_decoder", spec.edge_cnn_decoder, Shape{edge_width_, 1, 1}, rng);
  }
  global_decoder_ = detail::network("global_decoder", spec.global_decoder, Shape{global_width_}, rng);
}

std::vector<StepPrediction> GNPredictor::forward(const ModelInput& input, Mode mode) {
  const auto& g = input.graph;
  const std::size_t n = g.num_nodes(), m = g.num_edges();
  const std::string what(variant_name(config_.variant));
  detail::require_frames(g.nodes.visual, n, traits_.visual_channels, config_.height, config_.width, what);
  detail::require_controls(input.controls, g.num_graphs(), what);
  if (traits_.pose && (!g.nodes.pose.defined() || g.nodes.pose.shape() != Shape{n, 6})) {
    throw ShapeError(what + ": node poses must be [" + std::to_string(n) + ", 6]");
  }
  if (traits_.edges == EdgeKind::none && m > 0) {
    throw ShapeError(what + ": the variant has no edge model but the graph has " + std::to_string(m) + " edges");
  }
  if (traits_.edges == EdgeKind::pose && m > 0 && (!g.edges.pose.defined() || g.edges.pose.shape() != Shape{m, 9})) {
    throw ShapeError(what + ": edge poses must be [" + std::to_string(m) + ", 9]");
  }
  if (traits_.edges == EdgeKind::mask && m > 0) {
    const Shape want{m, 1, edge_decoder_.output_shape()[1], edge_decoder_.output_shape()[2]};
    if (!g.edges.mask.defined() || g.edges.mask.shape() != want) {
      throw ShapeError(what + ": edge masks must be " + ops::to_string(want));
    }
  }

  graphnet::EncodeProcessDecode model;
  model.encoder.fv = [&](const NodeAttrs& a) {
    NodeAttrs out;
    const Tensor visual = ops::reshape(node_encoder_.forward(a.visual, mode), Shape{a.visual.dim(0), visual_width_});
    out.latent = traits_.pose ? ops::concat({visual, pose_encoder_.forward(a.pose, mode)}, 1) : visual;
    return out;
  };
  if (traits_.edges != EdgeKind::none) {
    model.encoder.fe = [&](const EdgeAttrs& a) {
      EdgeAttrs out;
      const Tensor& raw = traits_.edges == EdgeKind::pose ? a.pose : a.mask;
      out.latent = ops::reshape(edge_encoder_.forward(raw, mode), Shape{raw.dim(0), edge_width_});
      return out;
    };
  }
  model.control_encoder = [&](const Tensor& c) { return control_encoder_.forward(c, mode); };

  auto& core = model.core;
  core.edge_in = 2 * edge_width_;
  core.edge_out = edge_width_;
  core.node_in = 2 * node_width_;
  core.node_out = node_width_;
  core.global_in = global_width_;
  core.global_out = global_width_;
  core.phi_e = [&](const graphnet::EdgeInputs& in) {
    return core_edge_.forward(ops::concat({in.edge, in.sender, in.receiver, in.global}, 1), mode);
  };
  core.phi_v = [&](const graphnet::NodeInputs& in) {
    return core_node_.forward(concat_nonempty({in.aggregated, in.node, in.global}), mode);
  };
  core.phi_u = [&](const graphnet::GlobalInputs& in) {
    return core_global_.forward(concat_nonempty({in.edges, in.nodes, in.global}), mode);
  };

  model.decoder.fv = [&](const NodeAttrs& a) {
    NodeAttrs out;
    const std::size_t rows = a.latent.dim(0);
    Tensor map = ops::reshape(ops::slice(a.latent, 1, 0, visual_width_),
                              Shape{rows, latent_map_[0], latent_map_[1], latent_map_[2]});
    if (traits_.pose) {
      const Tensor pose_latent = ops::slice(a.latent, 1, visual_width_, node_width_);
      map = ops::concat({map, ops::expand_spatial(pose_latent, latent_map_[1], latent_map_[2])}, 1);
      out.pose = pose_decoder_.forward(a.latent, mode);
    }
    out.visual = node_decoder_.forward(map, mode);
    out.latent = a.latent;
    return out;
  };
  if (traits_.edges != EdgeKind::none) {
    model.decoder.fe = [&](const EdgeAttrs& a) {
      EdgeAttrs out;
      if (traits_.edges == EdgeKind::pose) {
        out.pose = edge_decoder_.forward(a.latent, mode);
      } else {
        out.mask = edge_decoder_.forward(ops::reshape(a.latent, Shape{a.latent.dim(0), edge_width_, 1, 1}), mode);
      }
      out.latent = a.latent;
      return out;
    };
  }
  model.decoder.fu = [&](const Tensor& u) { return global_decoder_.forward(u, mode); };

  const auto rollout = graphnet::encode_process_decode(g, input.controls, model);
  std::vector<StepPrediction> out;
  for (const auto& d : rollout.decoded) {
    StepPrediction p;
    p.masks = d.nodes.visual;
    p.poses = d.nodes.pose;
    p.edges = traits_.edges == EdgeKind::pose ? d.edges.pose : d.edges.mask;
    p.latent = d.nodes.latent;
    out.push_back(p);
  }
  return out;
}

std::vector<NamedTensor> GNPredictor::parameters() const {
  std::vector<NamedTensor> out;
  for (const auto* net : {&node_encoder_, &pose_encoder_, &edge_encoder_, &control_encoder_, &core_edge_, &core_node_,
                          &core_global_, &node_decoder_, &pose_decoder_, &edge_decoder_, &global_decoder_}) {
    detail::append(out, net->parameters());
  }
  return out;
}

std::vector<NamedTensor> GNPredictor::buffers() const {
  std::vector<NamedTensor> out;
  for (const auto* net : {&node_encoder_, &pose_encoder_, &edge_encoder_, &control_encoder_, &core_edge_, &core_node_,
                          &core_global_, &node_decoder_, &pose_decoder_, &edge_decoder_, &global_decoder_}) {
    detail::append(out, net->buffers());
  }
  return out;
}

}  // namespace odyn::models
