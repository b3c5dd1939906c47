#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "odyn/ops.hpp"

namespace odyn::graphnet {

using tensor::Shape;
using tensor::Tensor;

/// Per-node attribute bundle, stacked over all nodes of a batch. Fields the
/// active variant does not use stay undefined.
struct NodeAttrs {
  Tensor visual;  // [N, C, H, W] stacked frames; after decoding, mask logits or probabilities
  Tensor pose;    // [N, 6] position ⊕ velocity
  Tensor latent;  // [N, D]
};

struct EdgeAttrs {
  Tensor pose;    // [E, 9] sender velocity ⊕ previous position ⊕ position
  Tensor mask;    // [E, 1, h, w] sender mask
  Tensor latent;  // [E, D]
};

/// A batch of directed attributed graphs laid out back to back: node rows of
/// graph g precede those of g + 1, edges likewise. Sender and receiver
/// indices address rows of the whole batch and never cross graphs.
struct AttributedGraph {
  Tensor globals;  // [G, F]
  NodeAttrs nodes;
  EdgeAttrs edges;
  std::vector<std::int32_t> senders;
  std::vector<std::int32_t> receivers;
  std::vector<std::size_t> n_node;
  std::vector<std::size_t> n_edge;

  std::size_t num_graphs() const { return n_node.size(); }
  std::size_t num_nodes() const;
  std::size_t num_edges() const { return senders.size(); }

  /// Graph index of every node row / edge row.
  std::vector<std::int32_t> node_graph() const;
  std::vector<std::int32_t> edge_graph() const;

  /// Throws ShapeError on any topology or row-count inconsistency.
  void validate() const;
};

/// Topology of G fully connected graphs without self-loops: N(N - 1) edges
/// per graph, ordered by sender then receiver. Attributes are left empty.
AttributedGraph fully_connected(std::span<const std::size_t> n_node);
/// Same counts, no edges.
AttributedGraph edgeless(std::span<const std::size_t> n_node);

/// Reorders node rows: row i of the result is row perm[i] of g. Edges keep
/// their order and are re-indexed. perm must map each graph onto itself.
AttributedGraph permute_nodes(const AttributedGraph& g, std::span<const std::int32_t> perm);
/// Reorders edge rows: edge i of the result is edge perm[i] of g.
AttributedGraph permute_edges(const AttributedGraph& g, std::span<const std::int32_t> perm);

/// Applies perm to the rows of t (undefined tensors pass through).
Tensor permute_rows(const Tensor& t, std::span<const std::int32_t> perm);

struct EdgeInputs {
  const Tensor& edge;      // [E, De]
  const Tensor& sender;    // [E, Dv]
  const Tensor& receiver;  // [E, Dv]
  const Tensor& global;    // [E, Du], the owning graph's global per edge
};

struct NodeInputs {
  const Tensor& aggregated;  // [N, De'], sum of updated incoming edges
  const Tensor& node;        // [N, Dv]
  const Tensor& global;      // [N, Du]
};

struct GlobalInputs {
  const Tensor& edges;   // [G, De'], per-graph sum of updated edges
  const Tensor& nodes;   // [G, Dv'], per-graph sum of updated nodes
  const Tensor& global;  // [G, Du]
};

/// The three update functions of a full GN block together with the latent
/// widths they consume and produce.
struct GNBlock {
  std::size_t edge_in = 0, node_in = 0, global_in = 0;
  std::size_t edge_out = 0, node_out = 0, global_out = 0;
  std::function<Tensor(const EdgeInputs&)> phi_e;
  std::function<Tensor(const NodeInputs&)> phi_v;
  std::function<Tensor(const GlobalInputs&)> phi_u;
};

/// Message passing over latent attributes (edges.latent, nodes.latent,
/// globals). Aggregation is an elementwise sum; a node without incoming edges
/// and a graph without edges aggregate to zero vectors of width edge_out.
/// With no edges phi_e is never called. Topology is preserved.
AttributedGraph full_gn_block(const AttributedGraph& g, const GNBlock& block);

/// Elementwise maps with no message passing. fe is skipped when the graph
/// has no edges; a missing function leaves its part unchanged.
struct IndependentBlock {
  std::function<EdgeAttrs(const EdgeAttrs&)> fe;
  std::function<NodeAttrs(const NodeAttrs&)> fv;
  std::function<Tensor(const Tensor&)> fu;
};

AttributedGraph independent_block(const AttributedGraph& g, const IndependentBlock& block);

/// g with globals := c_latent. c_latent must have one row per graph and, when
/// g already carries globals, the same width.
AttributedGraph replace_global(const AttributedGraph& g, const Tensor& c_latent);

struct EncodeProcessDecode {
  IndependentBlock encoder;
  /// Maps a raw control batch [G, 6] to the latent global [G, Du].
  std::function<Tensor(const Tensor&)> control_encoder;
  /// Consumes node/edge latents of width 2·D (encoded input ⊕ current).
  GNBlock core;
  IndependentBlock decoder;
};

struct RolloutGraphs {
  std::vector<AttributedGraph> latent;   // core output per step
  std::vector<AttributedGraph> decoded;  // decoder output per step
};

/// Encodes g0 once, then for each control k: replace the latent global with
/// the encoded control, run the core on [encoded g0 ⊕ current latent] and
/// decode the result. Decoded node visuals and edge masks are passed through
/// a sigmoid. Throws if controls is empty.
RolloutGraphs encode_process_decode(const AttributedGraph& g0, std::span<const Tensor> controls,
                                    const EncodeProcessDecode& model);

}  // namespace odyn::graphnet
