#include <stdexcept>
#include <string>

#include "odyn/models.hpp"

namespace odyn::models {

using tensor::LayerKind;
using tensor::ShapeError;

std::string_view preset_name(Preset p) { return p == Preset::desk ? "desk" : "paper"; }

Preset parse_preset(std::string_view name) {
  if (name == "desk") return Preset::desk;
  if (name == "paper") return Preset::paper;
  throw std::invalid_argument("unknown preset '" + std::string(name) + "' (expected desk or paper)");
}

namespace {

std::vector<LayerSpec> layers(std::initializer_list<const char*> texts) {
  std::vector<LayerSpec> out;
  for (const char* t : texts) out.push_back(LayerSpec::parse(t));
  return out;
}

Shape run_shapes(const std::vector<LayerSpec>& stack, Shape shape) {
  for (const auto& spec : stack) shape = tensor::infer_output_shape(spec, shape);
  return shape;
}

}  // namespace

void fit_transposed_stack(std::vector<LayerSpec>& stack, const Shape& input, std::size_t out_h,
                          std::size_t out_w) {
  if (input.size() != 3) throw ShapeError("fit_transposed_stack: input must be [C, H, W], got " + tensor::to_string(input));
  auto extent = [&](bool vertical) {
    const Shape out = run_shapes(stack, input);
    return vertical ? out[1] : out[2];
  };
  for (const bool vertical : {true, false}) {
    const std::size_t target = vertical ? out_h : out_w;
    if (extent(vertical) < target) {
      throw ShapeError("fit_transposed_stack: " + std::string(vertical ? "height " : "width ") +
                       std::to_string(extent(vertical)) + " is already below the target " + std::to_string(target));
    }
    // Monotone: more cropping never grows the output, so each layer takes
    // the largest crop that keeps the final extent at or above the target.
    for (auto& spec : stack) {
      if (extent(vertical) == target) break;
      if (spec.kind != LayerKind::transpconv) continue;
      const std::size_t kernel = vertical ? spec.kernel_h : spec.kernel_w;
      std::size_t& begin = vertical ? spec.pad_top : spec.pad_left;
      std::size_t& end = vertical ? spec.pad_bottom : spec.pad_right;
      const std::size_t room_begin = kernel - 1 > begin ? kernel - 1 - begin : 0;
      const std::size_t room_end = kernel - 1 > end ? kernel - 1 - end : 0;
      const std::size_t b0 = begin, e0 = end;
      std::size_t best = 0;
      for (std::size_t c = 1; c <= room_begin + room_end; ++c) {
        end = e0 + std::min(room_end, c - c / 2);
        begin = b0 + (c - (end - e0));
        bool fits = false;
        try {
          fits = extent(vertical) >= target;
        } catch (const ShapeError&) {
        }
        if (!fits) break;
        best = c;
      }
      end = e0 + std::min(room_end, best - best / 2);
      begin = b0 + (best - (end - e0));
    }
    if (extent(vertical) != target) {
      throw ShapeError("fit_transposed_stack: cannot crop " + std::string(vertical ? "height " : "width ") +
                       std::to_string(extent(vertical)) + " to " + std::to_string(target));
    }
  }
}

NetworkSpec network_spec(Preset preset) {
  return preset == Preset::desk ? network_spec(preset, 32, 24) : network_spec(preset, 160, 120);
}

NetworkSpec network_spec(Preset preset, std::size_t width, std::size_t height) {
  NetworkSpec s;
  s.width = width;
  s.height = height;
  s.control_encoder = layers({"FC-32", "FC-32", "FC-32"});
  s.global_decoder = layers({"FC-6", "FC-6", "FC-6"});
  s.pose_encoder = layers({"FC-32", "FC-32"});
  s.pose_decoder = layers({"FC-32", "FC-32", "FC-6"});
  s.edge_encoder = layers({"FC-64", "FC-64", "FC-64"});
  s.edge_decoder = layers({"FC-64", "FC-64", "FC-9"});
  s.core_edge_hidden = {64, 64};
  s.core_global = layers({"FC-32", "FC-32", "FC-32"});

  if (preset == Preset::desk) {
    s.edge_width = (width + 3) / 4;
    s.edge_height = (height + 3) / 4;
    s.node_encoder = layers({"conv3x3-1-16-p1", "maxpool", "conv3x3-1-32-p1", "maxpool", "conv3x3-1-32-p1", "maxpool"});
    s.node_decoder = layers({"transpconv2x2-2-32", "transpconv2x2-2-16", "transpconv2x2-2-16", "transpconv3x3-1-1-p1"});
    s.edge_cnn_encoder = layers({"conv3x3-2-8-p1", "conv3x3-1-4-p1"});
    // Sized from the edge mask so any frame size decodes; 4x3 at 32x24.
    const std::string seed_kernel = std::to_string((s.edge_width + 1) / 2) + "x" + std::to_string((s.edge_height + 1) / 2);
    s.edge_cnn_decoder = {LayerSpec::parse("transpconv" + seed_kernel + "-1-8"), LayerSpec::parse("transpconv2x2-2-1")};
    s.trans_hidden = {128};
    s.interact_hidden = {128};
    s.core_node_hidden = {128, 128};
  } else {
    s.edge_width = (width + 1) / 2;
    s.edge_height = (height + 1) / 2;
    s.node_encoder = layers({"conv3x3-1-128-p1", "conv3x3-1-128-p1", "maxpool",
                             "conv3x3-1-256-p1", "conv3x3-1-256-p1", "maxpool",
                             "conv3x3-1-256-p1", "conv3x3-1-256-p1", "maxpool",
                             "conv3x3-1-256-p1", "conv3x3-1-256-p1", "maxpool",
                             "conv3x3-2-256-p1", "conv3x3-2-256-p1", "maxpool"});
    // Ends in a single map: the mask is one sigmoid channel.
    s.node_decoder = layers({"transpconv2x2-1-256", "transpconv2x2-2-256", "transpconv4x4-[1x2]-256",
                             "transpconv3x2-2-256", "transpconv2x2-1-256", "transpconv2x2-1-128",
                             "transpconv2x2-2-128", "transpconv3x3-1-128", "transpconv3x3-2-128",
                             "transpconv3x3-1-128", "transpconv3x3-2-128", "transpconv3x3-1-1"});
    s.edge_cnn_encoder = layers({"conv3x3-2-32-p1", "conv3x3-2-32-p1", "conv3x3-2-16-p1", "conv3x3-2-5-p1"});
    s.edge_cnn_decoder = layers({"transpconv2x2-1-64", "transpconv2x2-2-64", "transpconv4x4-[1x2]-32",
                                 "transpconv3x2-2-16", "transpconv2x2-2-8", "transpconv3x2-2-2", "transpconv3x2-2-1"});
    s.trans_hidden = {256};
    s.interact_hidden = {256};
    s.core_node_hidden = {256, 256};
  }

  const Shape latent = run_shapes(s.node_encoder, Shape{1, height, width});
  fit_transposed_stack(s.node_decoder, latent, height, width);
  fit_transposed_stack(s.edge_cnn_decoder, Shape{1, 1, 1}, s.edge_height, s.edge_width);
  return s;
}

}  // namespace odyn::models
