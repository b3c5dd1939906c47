#include <stdexcept>
#include <string>

#include "common.hpp"

namespace odyn::models {

namespace ops = odyn::tensor;
using tensor::ShapeError;

namespace detail {

void require_frames(const Tensor& frames, std::size_t rows, std::size_t channels, std::size_t height,
                    std::size_t width, const std::string& what) {
  if (!frames.defined()) throw ShapeError(what + ": node frames are missing");
  const Shape want{rows, channels, height, width};
  if (frames.shape() != want) {
    throw ShapeError(what + ": node frames " + ops::to_string(frames.shape()) + ", expected " + ops::to_string(want));
  }
}

void require_controls(const std::vector<Tensor>& controls, std::size_t graphs, const std::string& what) {
  if (controls.empty()) throw ShapeError(what + ": at least one control step is required");
  for (const auto& c : controls) {
    if (!c.defined() || c.shape() != Shape{graphs, 6}) {
      throw ShapeError(what + ": control " + (c.defined() ? ops::to_string(c.shape()) : std::string("undefined")) +
                       ", expected [" + std::to_string(graphs) + ", 6]");
    }
  }
}

}  // namespace detail

VisualPredictor::VisualPredictor(const ModelConfig& config, Rng& rng)
    : config_(config), traits_(traits(config.variant)) {
  if (traits_.graph_network) {
    throw std::invalid_argument("VisualPredictor: " + std::string(variant_name(config.variant)) + " is a graph-network variant");
  }
  const NetworkSpec spec = network_spec(config.preset, config.width, config.height);
  encoder_ = detail::network("encoder", spec.node_encoder, Shape{traits_.visual_channels, config.height, config.width}, rng);
  latent_map_ = encoder_.output_shape();
  latent_width_ = ops::numel(latent_map_);
  control_encoder_ = detail::network("control_encoder", spec.control_encoder, Shape{6}, rng);
  const std::size_t du = control_encoder_.output_shape()[0];
  decoder_ = detail::network("decoder", spec.node_decoder, Shape{latent_map_[0] + du, latent_map_[1], latent_map_[2]}, rng);
  // Built last so the shared networks draw identical initial weights
  // whichever update functions a variant carries.
  if (traits_.trans) {
    trans_ = ops::Sequential("f_trans", detail::mlp(spec.trans_hidden, latent_width_), Shape{latent_width_ + du}, rng);
    trans_.zero_last_layer();
  }
  if (traits_.interact) {
    interact_ = ops::Sequential("f_interact", detail::mlp(spec.interact_hidden, latent_width_),
                                Shape{2 * (latent_width_ + du)}, rng);
    interact_.zero_last_layer();
  }
}

Tensor VisualPredictor::encode(const Tensor& frames, Mode mode) {
  const Tensor map = encoder_.forward(frames, mode);
  return ops::reshape(map, Shape{frames.dim(0), latent_width_});
}

Tensor VisualPredictor::decode(const Tensor& latent, const Tensor& control, Mode mode) {
  const std::size_t n = latent.dim(0);
  const Tensor map = ops::reshape(latent, Shape{n, latent_map_[0], latent_map_[1], latent_map_[2]});
  const Tensor broadcast = ops::expand_spatial(control, latent_map_[1], latent_map_[2]);
  return decoder_.forward(ops::concat({map, broadcast}, 1), mode);
}

std::vector<StepPrediction> VisualPredictor::forward(const ModelInput& input, Mode mode) {
  const auto& g = input.graph;
  const std::size_t n = g.num_nodes();
  const std::string what(variant_name(config_.variant));
  detail::require_frames(g.nodes.visual, n, traits_.visual_channels, config_.height, config_.width, what);
  detail::require_controls(input.controls, g.num_graphs(), what);

  const auto owner = g.node_graph();
  const auto pairs = detail::all_pairs(g.n_node);
  const bool reencode = config_.effective_feedback() == Feedback::reencode;

  Tensor frames = g.nodes.visual;
  Tensor v = encode(frames, mode);
  std::vector<StepPrediction> out;
  for (std::size_t k = 0; k < input.controls.size(); ++k) {
    const Tensor c = ops::gather_rows(control_encoder_.forward(input.controls[k], mode), owner);
    Tensor next = v;
    if (traits_.trans || traits_.interact) {
      const Tensor v_bar = ops::concat({v, c}, 1);
      if (traits_.trans) next = ops::add(next, trans_.forward(v_bar, mode));
      if (traits_.interact && !pairs.receivers.empty()) {
        const Tensor pair_in =
            ops::concat({ops::gather_rows(v_bar, pairs.receivers), ops::gather_rows(v_bar, pairs.senders)}, 1);
        next = ops::add(next, ops::scatter_add_rows(interact_.forward(pair_in, mode), pairs.receivers, n));
      }
    }
    StepPrediction p;
    p.masks = ops::sigmoid(decode(next, c, mode));
    p.latent = next;
    out.push_back(p);
    if (k + 1 == input.controls.size()) break;
    if (reencode) {
      frames = detail::replace_channel(frames, p.masks, traits_.mask_channel);
      v = encode(frames, mode);
    } else {
      v = next;
    }
  }
  return out;
}

std::vector<NamedTensor> VisualPredictor::parameters() const {
  std::vector<NamedTensor> out;
  for (const auto* net : {&encoder_, &control_encoder_, &decoder_, &trans_, &interact_}) {
    detail::append(out, net->parameters());
  }
  return out;
}

std::vector<NamedTensor> VisualPredictor::buffers() const {
  std::vector<NamedTensor> out;
  for (const auto* net : {&encoder_, &control_encoder_, &decoder_, &trans_, &interact_}) {
    detail::append(out, net->buffers());
  }
  return out;
}

}  // namespace odyn::models
