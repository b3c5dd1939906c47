#include <stdexcept>
#include <string>

#include "odyn/pipeline.hpp"

namespace odyn::pipeline {

std::vector<Tensor> rollout(models::Predictor& model, const sim::Episode& ep, std::size_t start, std::size_t n) {
  if (n == 0) throw std::invalid_argument("rollout: horizon must be at least 1");
  if (start + n >= ep.length()) {
    throw std::out_of_range("rollout: start " + std::to_string(start) + " + horizon " + std::to_string(n) +
                            " runs past an episode of " + std::to_string(ep.length()) + " steps");
  }
  tensor::NoGradGuard no_grad;
  models::ModelInput input;
  input.graph = episode_to_graph(ep, start, model.config());
  for (std::size_t k = 0; k < n; ++k) input.controls.push_back(control(ep, start + k));
  const auto preds = model.forward(input, tensor::Mode::eval);
  std::vector<Tensor> masks;
  masks.reserve(preds.size());
  for (const auto& p : preds) masks.push_back(p.masks);
  return masks;
}

}  // namespace odyn::pipeline
