#include <string>

#include "odyn/models.hpp"

namespace odyn::models {

namespace ops = odyn::tensor;
using tensor::ShapeError;

namespace {

void require_same(const Tensor& target, const Tensor& prediction, const std::string& what, std::size_t step) {
  if (!target.defined() || !prediction.defined()) {
    throw ShapeError("loss: " + what + " at step " + std::to_string(step) + " is missing");
  }
  if (target.shape() != prediction.shape()) {
    throw ShapeError("loss: " + what + " at step " + std::to_string(step) + " has target " +
                     ops::to_string(target.shape()) + " but prediction " + ops::to_string(prediction.shape()));
  }
}

// Mean over rows of the per-row squared distance, averaged or summed over
// the vector components.
Tensor squared_error(const Tensor& target, const Tensor& prediction, bool sum_components) {
  const Tensor m = ops::mse_loss(target, prediction);
  return sum_components ? ops::scale(m, static_cast<real>(prediction.dim(1))) : m;
}

}  // namespace

Tensor loss_eq1(const std::vector<StepTarget>& targets, const std::vector<StepPrediction>& predictions,
                Variant variant, bool sum_components) {
  if (targets.empty() || targets.size() != predictions.size()) {
    throw ShapeError("loss: " + std::to_string(targets.size()) + " targets for " + std::to_string(predictions.size()) +
                     " predictions");
  }
  const VariantTraits t = traits(variant);
  Tensor total;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto& y = targets[k];
    const auto& p = predictions[k];
    require_same(y.masks, p.masks, "masks", k);
    Tensor step = ops::bce_loss(y.masks, p.masks);
    if (t.pose) {
      require_same(y.poses, p.poses, "poses", k);
      step = ops::add(step, squared_error(y.poses, p.poses, sum_components));
    }
    // Empty edge sets (single-object scenes) contribute nothing.
    const bool has_edges = t.edges != EdgeKind::none && (y.edges.defined() || p.edges.defined()) &&
                           !(y.edges.defined() && y.edges.dim(0) == 0);
    if (has_edges) {
      require_same(y.edges, p.edges, "edges", k);
      step = ops::add(step, t.edges == EdgeKind::pose ? squared_error(y.edges, p.edges, sum_components)
                                                   : ops::bce_loss(y.edges, p.edges));
    }
    total = total.defined() ? ops::add(total, step) : step;
  }
  return ops::scale(total, real(1) / static_cast<real>(targets.size()));
}

Tensor latent_loss(const std::vector<Tensor>& predicted, const std::vector<Tensor>& target_frames,
                   const LatentTargetEncoder& target) {
  if (predicted.empty() || predicted.size() != target_frames.size()) {
    throw ShapeError("latent_loss: " + std::to_string(predicted.size()) + " predicted latents for " +
                     std::to_string(target_frames.size()) + " target frames");
  }
  if (!target.defined()) throw ShapeError("latent_loss: the latent target encoder is not set");
  Tensor total;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const Tensor goal = target.encode(target_frames[k]);
    require_same(goal, predicted[k], "latent", k);
    const Tensor step = ops::mse_loss(goal, predicted[k]);
    total = total.defined() ? ops::add(total, step) : step;
  }
  return ops::scale(total, real(1) / static_cast<real>(predicted.size()));
}

}  // namespace odyn::models
