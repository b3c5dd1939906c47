// Optimization checks, run in the float build the tool ships with.

#include <cmath>

#include "doctest.h"
#include "odyn/models.hpp"
#include "odyn/optim.hpp"
#include "odyn/pipeline.hpp"
#include "odyn/sim.hpp"

using namespace odyn;
using namespace odyn::models;
using tensor::Mode;
namespace ops = odyn::tensor;

namespace {

std::vector<sim::Episode> episodes(std::size_t count, std::uint64_t seed) {
  std::vector<sim::Episode> out;
  const auto cfg = sim::role_config("train3");
  for (std::size_t i = 0; i < count; ++i) out.push_back(sim::generate_episode(cfg, seed + i));
  return out;
}

}  // namespace

TEST_CASE("memorization auto-encoder reaches the target IoU on five episodes") {
  ModelConfig cfg;
  cfg.variant = Variant::ap;
  const auto eps = episodes(5, 300);
  std::vector<Tensor> frames;
  for (const auto& ep : eps) {
    for (std::size_t t = 0; t < ep.length(); ++t) frames.push_back(pipeline::node_frames(ep, t, traits(cfg.variant)));
  }
  const Tensor all = ops::concat(frames, 0);
  MemorizationOptions options;
  options.max_steps = 2000;
  Rng rng(8);
  const auto result = pretrain_memorization_ae(all, cfg, options, rng);
  MESSAGE("memorization IoU " << result.iou << " after " << result.steps << " steps");
  CHECK(result.reached);
  CHECK(result.iou >= 0.95);
  CHECK(result.steps <= 2000);
  CHECK(result.encoder.defined());
}

TEST_CASE("auto-predictor overfits a single transition") {
  ModelConfig cfg;
  cfg.variant = Variant::ap;
  const auto eps = episodes(1, 320);
  // The same sample twice: batch norm needs two rows per graph slot.
  const std::vector<pipeline::Sample> samples{{0, 4}, {0, 4}};
  const auto batch = pipeline::make_batch(eps, samples, 1, cfg);
  Rng rng(9);
  auto model = make_predictor(cfg, rng);
  auto params = model->parameters();
  auto state = tensor::AdamState::for_parameters(params);
  tensor::AdamOptions adam;
  double bce = 1;
  for (int step = 0; step < 1500 && bce >= 0.01; ++step) {
    tensor::zero_grad(params);
    const auto preds = model->forward(batch.input, Mode::train);
    Tensor loss = loss_eq1(batch.targets, preds, cfg.variant);
    loss.backward();
    tensor::adam_step(params, state, adam);
    bce = loss.item();
  }
  MESSAGE("final mask loss " << bce);
  CHECK(bce < 0.01);
}
