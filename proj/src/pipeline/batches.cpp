#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

#include "odyn/pipeline.hpp"

namespace odyn::pipeline {

namespace ops = odyn::tensor;

std::vector<Sample> all_samples(std::span<const sim::Episode> episodes, std::size_t horizon) {
  if (horizon == 0) throw std::invalid_argument("horizon must be at least 1");
  std::vector<Sample> out;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const std::size_t len = episodes[e].length();
    for (std::size_t s = 0; s + horizon < len; ++s) out.push_back({e, s});
  }
  return out;
}

std::vector<std::vector<Sample>> make_batches(std::span<const sim::Episode> episodes, std::size_t horizon,
                                              std::size_t batch_size, Rng& rng) {
  if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
  // Ordered map: group iteration order must not depend on hashing.
  std::map<std::size_t, std::vector<Sample>> groups;
  for (const auto& s : all_samples(episodes, horizon)) groups[episodes[s.episode].num_objects].push_back(s);

  std::vector<std::vector<Sample>> batches;
  for (auto& [n, group] : groups) {
    if (group.size() < 2) continue;
    std::shuffle(group.begin(), group.end(), rng);
    const std::size_t first = batches.size();
    for (std::size_t i = 0; i < group.size(); i += batch_size) {
      const std::size_t end = std::min(group.size(), i + batch_size);
      batches.emplace_back(group.begin() + static_cast<std::ptrdiff_t>(i),
                           group.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (batches.size() - first > 1 && batches.back().size() == 1) {
      const Sample last = batches.back().front();
      batches.pop_back();
      batches.back().push_back(last);
    }
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

namespace {

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty() || !parts.front().defined()) return {};
  return parts.size() == 1 ? parts.front() : ops::concat(parts, 0);
}

}  // namespace

Batch make_batch(std::span<const sim::Episode> episodes, std::span<const Sample> samples, std::size_t horizon,
                 const ModelConfig& config) {
  if (samples.empty()) throw std::invalid_argument("make_batch: no samples");
  if (horizon == 0) throw std::invalid_argument("horizon must be at least 1");
  const auto tr = models::traits(config.variant);
  std::vector<AttributedGraph> graphs;
  for (const auto& s : samples) {
    if (s.episode >= episodes.size()) throw std::out_of_range("make_batch: episode index out of range");
    const auto& ep = episodes[s.episode];
    if (s.start + horizon >= ep.length()) {
      throw std::out_of_range("make_batch: start " + std::to_string(s.start) + " + horizon " +
                              std::to_string(horizon) + " runs past an episode of " + std::to_string(ep.length()) +
                              " steps");
    }
    graphs.push_back(episode_to_graph(ep, s.start, config));
  }

  Batch b;
  b.input.graph = batch_graphs(graphs);
  for (std::size_t k = 0; k < horizon; ++k) {
    std::vector<Tensor> controls, masks, poses, edges, frames;
    for (const auto& s : samples) {
      const auto& ep = episodes[s.episode];
      controls.push_back(control(ep, s.start + k));
      auto y = step_target(ep, s.start + k + 1, config);
      masks.push_back(y.masks);
      poses.push_back(y.poses);
      if (y.edges.defined() && y.edges.dim(0) > 0) edges.push_back(y.edges);
      frames.push_back(node_frames(ep, s.start + k + 1, tr));
    }
    b.input.controls.push_back(stack(controls));
    models::StepTarget y;
    y.masks = stack(masks);
    y.poses = stack(poses);
    if (tr.edges != models::EdgeKind::none) {
      y.edges = edges.empty() ? step_target(episodes[samples.front().episode], samples.front().start + k + 1, config).edges
                              : stack(edges);
    }
    b.targets.push_back(std::move(y));
    b.target_frames.push_back(stack(frames));
  }
  return b;
}

}  // namespace odyn::pipeline
