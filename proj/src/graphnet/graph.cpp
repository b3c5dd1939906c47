#include <algorithm>
#include <numeric>
#include <string>

#include "odyn/graph.hpp"

namespace odyn::graphnet {

using tensor::ShapeError;

std::size_t AttributedGraph::num_nodes() const {
  return std::accumulate(n_node.begin(), n_node.end(), std::size_t{0});
}

std::vector<std::int32_t> AttributedGraph::node_graph() const {
  std::vector<std::int32_t> out;
  out.reserve(num_nodes());
  for (std::size_t g = 0; g < n_node.size(); ++g) out.insert(out.end(), n_node[g], static_cast<std::int32_t>(g));
  return out;
}

std::vector<std::int32_t> AttributedGraph::edge_graph() const {
  std::vector<std::int32_t> out;
  out.reserve(num_edges());
  for (std::size_t g = 0; g < n_edge.size(); ++g) out.insert(out.end(), n_edge[g], static_cast<std::int32_t>(g));
  return out;
}

namespace {

void check_rows(const Tensor& t, std::size_t rows, const char* what) {
  if (!t.defined()) return;
  if (t.rank() == 0 || t.dim(0) != rows) {
    throw ShapeError(std::string("graph: ") + what + " has shape " + tensor::to_string(t.shape()) +
                     ", expected " + std::to_string(rows) + " rows");
  }
}

}  // namespace

void AttributedGraph::validate() const {
  if (n_edge.size() != n_node.size()) {
    throw ShapeError("graph: " + std::to_string(n_node.size()) + " node counts but " +
                     std::to_string(n_edge.size()) + " edge counts");
  }
  if (receivers.size() != senders.size()) throw ShapeError("graph: senders and receivers differ in length");
  const std::size_t edges_total = std::accumulate(n_edge.begin(), n_edge.end(), std::size_t{0});
  if (edges_total != senders.size()) {
    throw ShapeError("graph: per-graph edge counts sum to " + std::to_string(edges_total) + " but " +
                     std::to_string(senders.size()) + " edges are listed");
  }
  const auto owner = node_graph();
  const auto edge_owner = edge_graph();
  for (std::size_t e = 0; e < senders.size(); ++e) {
    for (auto idx : {senders[e], receivers[e]}) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= owner.size()) {
        throw ShapeError("graph: edge " + std::to_string(e) + " references node " + std::to_string(idx) +
                         " of " + std::to_string(owner.size()));
      }
      if (owner[static_cast<std::size_t>(idx)] != edge_owner[e]) {
        throw ShapeError("graph: edge " + std::to_string(e) + " crosses graphs");
      }
    }
  }
  check_rows(globals, num_graphs(), "globals");
  const std::size_t n = num_nodes(), m = num_edges();
  check_rows(nodes.visual, n, "node visual");
  check_rows(nodes.pose, n, "node pose");
  check_rows(nodes.latent, n, "node latent");
  check_rows(edges.pose, m, "edge pose");
  check_rows(edges.mask, m, "edge mask");
  check_rows(edges.latent, m, "edge latent");
  if (nodes.pose.defined() && nodes.pose.rank() == 2 && nodes.pose.dim(1) != 6) {
    throw ShapeError("graph: node pose must be 6 wide, got " + tensor::to_string(nodes.pose.shape()));
  }
  if (edges.pose.defined() && edges.pose.rank() == 2 && edges.pose.dim(1) != 9) {
    throw ShapeError("graph: edge pose must be 9 wide, got " + tensor::to_string(edges.pose.shape()));
  }
}

AttributedGraph fully_connected(std::span<const std::size_t> n_node) {
  AttributedGraph g;
  g.n_node.assign(n_node.begin(), n_node.end());
  std::int32_t offset = 0;
  for (auto count : n_node) {
    const auto n = static_cast<std::int32_t>(count);
    for (std::int32_t s = 0; s < n; ++s) {
      for (std::int32_t r = 0; r < n; ++r) {
        if (s == r) continue;
        g.senders.push_back(offset + s);
        g.receivers.push_back(offset + r);
      }
    }
    g.n_edge.push_back(count * (count ? count - 1 : 0));
    offset += n;
  }
  return g;
}

AttributedGraph edgeless(std::span<const std::size_t> n_node) {
  AttributedGraph g;
  g.n_node.assign(n_node.begin(), n_node.end());
  g.n_edge.assign(n_node.size(), 0);
  return g;
}

Tensor permute_rows(const Tensor& t, std::span<const std::int32_t> perm) {
  if (!t.defined()) return t;
  return tensor::gather_rows(t, perm);
}

namespace {

void check_permutation(std::span<const std::int32_t> perm, std::size_t size, const char* what) {
  if (perm.size() != size) {
    throw ShapeError(std::string(what) + ": permutation of length " + std::to_string(perm.size()) +
                     " for " + std::to_string(size) + " rows");
  }
  std::vector<bool> seen(size, false);
  for (auto p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= size || seen[static_cast<std::size_t>(p)]) {
      throw ShapeError(std::string(what) + ": not a permutation");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
}

}  // namespace

AttributedGraph permute_nodes(const AttributedGraph& g, std::span<const std::int32_t> perm) {
  check_permutation(perm, g.num_nodes(), "permute_nodes");
  const auto owner = g.node_graph();
  std::vector<std::int32_t> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto p = static_cast<std::size_t>(perm[i]);
    if (owner[p] != owner[i]) throw ShapeError("permute_nodes: permutation moves a node across graphs");
    inverse[p] = static_cast<std::int32_t>(i);
  }
  AttributedGraph out = g;
  out.nodes.visual = permute_rows(g.nodes.visual, perm);
  out.nodes.pose = permute_rows(g.nodes.pose, perm);
  out.nodes.latent = permute_rows(g.nodes.latent, perm);
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    out.senders[e] = inverse[static_cast<std::size_t>(g.senders[e])];
    out.receivers[e] = inverse[static_cast<std::size_t>(g.receivers[e])];
  }
  return out;
}

AttributedGraph permute_edges(const AttributedGraph& g, std::span<const std::int32_t> perm) {
  check_permutation(perm, g.num_edges(), "permute_edges");
  const auto owner = g.edge_graph();
  AttributedGraph out = g;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto p = static_cast<std::size_t>(perm[i]);
    if (owner[p] != owner[i]) throw ShapeError("permute_edges: permutation moves an edge across graphs");
    out.senders[i] = g.senders[p];
    out.receivers[i] = g.receivers[p];
  }
  out.edges.pose = permute_rows(g.edges.pose, perm);
  out.edges.mask = permute_rows(g.edges.mask, perm);
  out.edges.latent = permute_rows(g.edges.latent, perm);
  return out;
}

}  // namespace odyn::graphnet
