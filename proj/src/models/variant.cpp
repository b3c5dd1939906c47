#include <array>
#include <stdexcept>
#include <string>

#include "odyn/models.hpp"

namespace odyn::models {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 7> names{{
    {Variant::gn_pos_vel, "gn_pos_vel"},
    {Variant::gn_segm, "gn_segm"},
    {Variant::gn_segm_no_rgbd, "gn_segm_no_rgbd"},
    {Variant::gn_no_edges, "gn_no_edges"},
    {Variant::ap, "ap"},
    {Variant::ap_no_interact, "ap_no_interact"},
    {Variant::baseline, "baseline"},
}};

}  // namespace

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> all = [] {
    std::vector<Variant> v;
    for (const auto& [variant, name] : names) v.push_back(variant);
    return v;
  }();
  return all;
}

std::string_view variant_name(Variant v) {
  for (const auto& [variant, name] : names) {
    if (variant == v) return name;
  }
  throw std::invalid_argument("variant_name: unknown variant");
}

Variant parse_variant(std::string_view text) {
  for (const auto& [variant, name] : names) {
    if (name == text) return variant;
  }
  std::string known;
  for (const auto& [variant, name] : names) known += (known.empty() ? "" : ", ") + std::string(name);
  throw std::invalid_argument("unknown variant '" + std::string(text) + "' (expected one of " + known + ")");
}

VariantTraits traits(Variant v) {
  VariantTraits t;
  switch (v) {
    case Variant::gn_pos_vel:
      t.graph_network = true;
      t.pose = true;
      t.edges = EdgeKind::pose;
      break;
    case Variant::gn_segm:
      t.graph_network = true;
      t.edges = EdgeKind::mask;
      break;
    case Variant::gn_segm_no_rgbd:
      t.graph_network = true;
      t.visual_channels = 1;
      t.mask_channel = 0;
      t.edges = EdgeKind::mask;
      break;
    case Variant::gn_no_edges:
      t.graph_network = true;
      t.pose = true;
      break;
    case Variant::ap:
      t.trans = true;
      t.interact = true;
      break;
    case Variant::ap_no_interact:
      t.trans = true;
      break;
    case Variant::baseline:
      break;
  }
  return t;
}

Feedback ModelConfig::effective_feedback() const {
  if (feedback) return *feedback;
  return variant == Variant::baseline ? Feedback::reencode : Feedback::latent;
}

std::unique_ptr<Predictor> make_predictor(const ModelConfig& config, Rng& rng) {
  if (traits(config.variant).graph_network) return std::make_unique<GNPredictor>(config, rng);
  return std::make_unique<VisualPredictor>(config, rng);
}

}  // namespace odyn::models
