#pragma once

#include <string>
#include <vector>

#include "odyn/models.hpp"

namespace odyn::models::detail {

/// Hidden dense layers followed by a terminal FC of width `out`, with hidden
/// activations inserted.
inline std::vector<LayerSpec> mlp(const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<LayerSpec> specs;
  for (std::size_t h : hidden) specs.push_back(LayerSpec::parse("FC-" + std::to_string(h)));
  specs.push_back(LayerSpec::parse("FC-" + std::to_string(out)));
  return tensor::with_hidden_activations(specs);
}

inline tensor::Sequential network(const std::string& name, const std::vector<LayerSpec>& weighted, Shape input,
                                  Rng& rng) {
  return tensor::Sequential(name, tensor::with_hidden_activations(weighted), std::move(input), rng);
}

inline void append(std::vector<NamedTensor>& out, const std::vector<NamedTensor>& more) {
  out.insert(out.end(), more.begin(), more.end());
}

/// Receiver / sender rows of every ordered pair i != j inside each graph.
struct Pairs {
  std::vector<std::int32_t> receivers, senders;
};

inline Pairs all_pairs(const std::vector<std::size_t>& n_node) {
  Pairs p;
  std::int32_t base = 0;
  for (std::size_t n : n_node) {
    const auto count = static_cast<std::int32_t>(n);
    for (std::int32_t i = 0; i < count; ++i) {
      for (std::int32_t j = 0; j < count; ++j) {
        if (i == j) continue;
        p.receivers.push_back(base + i);
        p.senders.push_back(base + j);
      }
    }
    base += count;
  }
  return p;
}

/// frames [N, C, H, W] with channel `c` replaced by mask [N, 1, H, W].
inline Tensor replace_channel(const Tensor& frames, const Tensor& mask, std::size_t c) {
  const std::size_t channels = frames.dim(1);
  std::vector<Tensor> parts;
  if (c > 0) parts.push_back(tensor::slice(frames, 1, 0, c));
  parts.push_back(mask);
  if (c + 1 < channels) parts.push_back(tensor::slice(frames, 1, c + 1, channels));
  return parts.size() == 1 ? parts[0] : tensor::concat(parts, 1);
}

void require_frames(const Tensor& frames, std::size_t rows, std::size_t channels, std::size_t height,
                    std::size_t width, const std::string& what);
void require_controls(const std::vector<Tensor>& controls, std::size_t graphs, const std::string& what);

}  // namespace odyn::models::detail
