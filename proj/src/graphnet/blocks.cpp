#include <string>

#include "odyn/graph.hpp"

namespace odyn::graphnet {

using tensor::ShapeError;
namespace ops = odyn::tensor;

namespace {

void require_width(const Tensor& t, std::size_t rows, std::size_t width, const std::string& what) {
  if (!t.defined()) throw ShapeError(what + " is missing");
  if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != width) {
    throw ShapeError(what + " has shape " + ops::to_string(t.shape()) + ", block expects [" +
                     std::to_string(rows) + ", " + std::to_string(width) + "]");
  }
}

Tensor zeros(std::size_t rows, std::size_t width) { return Tensor(Shape{rows, width}); }

}  // namespace

AttributedGraph full_gn_block(const AttributedGraph& g, const GNBlock& block) {
  const std::size_t n = g.num_nodes(), m = g.num_edges(), gs = g.num_graphs();
  require_width(g.nodes.latent, n, block.node_in, "full_gn_block: node latent");
  require_width(g.globals, gs, block.global_in, "full_gn_block: globals");
  if (m > 0) require_width(g.edges.latent, m, block.edge_in, "full_gn_block: edge latent");

  const auto node_owner = g.node_graph();
  AttributedGraph out = g;

  Tensor edges_new, aggregated, edge_totals;
  if (m > 0) {
    const auto edge_owner = g.edge_graph();
    const Tensor sender = ops::gather_rows(g.nodes.latent, g.senders);
    const Tensor receiver = ops::gather_rows(g.nodes.latent, g.receivers);
    const Tensor global_e = ops::gather_rows(g.globals, edge_owner);
    edges_new = block.phi_e(EdgeInputs{g.edges.latent, sender, receiver, global_e});
    require_width(edges_new, m, block.edge_out, "full_gn_block: phi_e output");
    aggregated = ops::scatter_add_rows(edges_new, g.receivers, n);
    edge_totals = ops::scatter_add_rows(edges_new, edge_owner, gs);
  } else {
    aggregated = zeros(n, block.edge_out);
    edge_totals = zeros(gs, block.edge_out);
  }

  const Tensor global_v = ops::gather_rows(g.globals, node_owner);
  Tensor nodes_new = block.phi_v(NodeInputs{aggregated, g.nodes.latent, global_v});
  require_width(nodes_new, n, block.node_out, "full_gn_block: phi_v output");
  const Tensor node_totals = ops::scatter_add_rows(nodes_new, node_owner, gs);

  Tensor globals_new = block.phi_u(GlobalInputs{edge_totals, node_totals, g.globals});
  require_width(globals_new, gs, block.global_out, "full_gn_block: phi_u output");

  out.nodes.latent = nodes_new;
  out.edges.latent = edges_new;
  out.globals = globals_new;
  return out;
}

AttributedGraph independent_block(const AttributedGraph& g, const IndependentBlock& block) {
  AttributedGraph out = g;
  if (block.fe && g.num_edges() > 0) out.edges = block.fe(g.edges);
  if (block.fv) out.nodes = block.fv(g.nodes);
  if (block.fu) out.globals = block.fu(g.globals);
  out.validate();
  return out;
}

AttributedGraph replace_global(const AttributedGraph& g, const Tensor& c_latent) {
  if (!c_latent.defined() || c_latent.rank() != 2 || c_latent.dim(0) != g.num_graphs()) {
    throw ShapeError("replace_global: control latent " +
                     (c_latent.defined() ? ops::to_string(c_latent.shape()) : std::string("undefined")) +
                     " does not match " + std::to_string(g.num_graphs()) + " graphs");
  }
  if (g.globals.defined() && g.globals.dim(1) != c_latent.dim(1)) {
    throw ShapeError("replace_global: control latent width " + std::to_string(c_latent.dim(1)) +
                     " differs from global width " + std::to_string(g.globals.dim(1)));
  }
  AttributedGraph out = g;
  out.globals = c_latent;
  return out;
}

RolloutGraphs encode_process_decode(const AttributedGraph& g0, std::span<const Tensor> controls,
                                    const EncodeProcessDecode& model) {
  if (controls.empty()) throw ShapeError("encode_process_decode: at least one control step is required");
  g0.validate();
  AttributedGraph encoded = independent_block(g0, model.encoder);
  if (!encoded.nodes.latent.defined()) throw ShapeError("encode_process_decode: encoder produced no node latent");
  const std::size_t node_width = encoded.nodes.latent.dim(1);
  if (model.core.node_in != 2 * node_width || model.core.node_out != node_width) {
    throw ShapeError("encode_process_decode: core node widths " + std::to_string(model.core.node_in) + " -> " +
                     std::to_string(model.core.node_out) + " do not fit latent width " +
                     std::to_string(node_width));
  }
  const bool has_edges = encoded.num_edges() > 0;
  if (has_edges) {
    const std::size_t edge_width = encoded.edges.latent.dim(1);
    if (model.core.edge_in != 2 * edge_width || model.core.edge_out != edge_width) {
      throw ShapeError("encode_process_decode: core edge widths do not fit latent width " +
                       std::to_string(edge_width));
    }
  }

  RolloutGraphs result;
  AttributedGraph current = encoded;
  // The replaced global is the encoded control itself, so only nodes and
  // edges carry the skip from the encoded input.
  current.globals = Tensor();
  for (const auto& control : controls) {
    AttributedGraph core_in = replace_global(current, model.control_encoder(control));
    core_in.nodes.latent = ops::concat({encoded.nodes.latent, current.nodes.latent}, 1);
    if (has_edges) core_in.edges.latent = ops::concat({encoded.edges.latent, current.edges.latent}, 1);
    current = full_gn_block(core_in, model.core);

    AttributedGraph decoded = independent_block(current, model.decoder);
    if (decoded.nodes.visual.defined()) decoded.nodes.visual = ops::sigmoid(decoded.nodes.visual);
    if (decoded.edges.mask.defined()) decoded.edges.mask = ops::sigmoid(decoded.edges.mask);
    result.latent.push_back(current);
    result.decoded.push_back(std::move(decoded));
  }
  return result;
}

}  // namespace odyn::graphnet
