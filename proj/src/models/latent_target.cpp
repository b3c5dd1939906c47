#include <algorithm>
#include <numeric>
#include <string>

#include "common.hpp"

namespace odyn::models {

namespace ops = odyn::tensor;
using tensor::ShapeError;

double mask_iou(std::span<const real> truth, std::span<const real> predicted) {
  if (truth.size() != predicted.size()) {
    throw ShapeError("mask_iou: " + std::to_string(truth.size()) + " vs " + std::to_string(predicted.size()) + " pixels");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool a = truth[i] >= real(0.5), b = predicted[i] >= real(0.5);
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double mean_mask_iou(const Tensor& truth, const Tensor& predicted) {
  if (truth.shape() != predicted.shape() || truth.rank() < 1 || truth.dim(0) == 0) {
    throw ShapeError("mean_mask_iou: " + ops::to_string(truth.shape()) + " vs " + ops::to_string(predicted.shape()));
  }
  const std::size_t rows = truth.dim(0), per = ops::numel(truth.shape()) / rows;
  const auto a = truth.values();
  const auto b = predicted.values();
  double total = 0;
  for (std::size_t r = 0; r < rows; ++r) total += mask_iou(a.subspan(r * per, per), b.subspan(r * per, per));
  return total / static_cast<double>(rows);
}

Tensor LatentTargetEncoder::encode(const Tensor& frames) const {
  if (!defined()) throw ShapeError("LatentTargetEncoder: not initialized");
  tensor::NoGradGuard guard;
  const Tensor map = encoder_.forward(frames, Mode::eval);
  return ops::reshape(map, Shape{frames.dim(0), ops::numel(encoder_.output_shape())});
}

LatentTargetEncoder make_latent_target(const ModelConfig& config, Rng& rng) {
  const NetworkSpec spec = network_spec(config.preset, config.width, config.height);
  const auto t = traits(config.variant);
  return LatentTargetEncoder(
      detail::network("encoder", spec.node_encoder, Shape{t.visual_channels, config.height, config.width}, rng));
}

namespace {

std::vector<std::vector<real>> snapshot(const std::vector<NamedTensor>& tensors) {
  std::vector<std::vector<real>> out;
  for (const auto& t : tensors) out.emplace_back(t.tensor.values().begin(), t.tensor.values().end());
  return out;
}

void restore(const std::vector<NamedTensor>& tensors, const std::vector<std::vector<real>>& values) {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor handle = tensors[i].tensor;
    auto dst = handle.values();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

Tensor rows_of(const Tensor& t, const std::vector<std::int32_t>& rows) {
  tensor::NoGradGuard guard;
  return ops::gather_rows(t, rows);
}

}  // namespace

MemorizationResult pretrain_memorization_ae(const Tensor& frames, const ModelConfig& config,
                                            const MemorizationOptions& options, Rng& rng) {
  const auto t = traits(config.variant);
  const Shape want{t.visual_channels, config.height, config.width};
  if (frames.rank() != 4 || frames.dim(0) == 0 || Shape(frames.shape().begin() + 1, frames.shape().end()) != want) {
    throw ShapeError("pretrain_memorization_ae: frames " + ops::to_string(frames.shape()) + ", expected [M, " +
                     ops::to_string(want).substr(1));
  }
  if (options.batch == 0 || options.check_every == 0) {
    throw std::invalid_argument("pretrain_memorization_ae: batch and check_every must be positive");
  }
  const NetworkSpec spec = network_spec(config.preset, config.width, config.height);
  auto encoder = detail::network("encoder", spec.node_encoder, want, rng);
  const Shape map = encoder.output_shape();
  auto decoder = detail::network("ae_decoder", spec.node_decoder, map, rng);

  const std::size_t m = frames.dim(0);
  const Tensor masks = ops::slice(frames, 1, t.mask_channel, t.mask_channel + 1).detach();
  auto params = encoder.parameters();
  detail::append(params, decoder.parameters());
  auto adam = tensor::AdamState::for_parameters(params);

  auto evaluate = [&] {
    tensor::NoGradGuard guard;
    double total = 0;
    constexpr std::size_t chunk = 128;
    for (std::size_t begin = 0; begin < m; begin += chunk) {
      const std::size_t end = std::min(m, begin + chunk);
      const Tensor x = ops::slice(frames, 0, begin, end);
      const Tensor y = ops::sigmoid(decoder.forward(encoder.forward(x, Mode::eval), Mode::eval));
      total += mean_mask_iou(ops::slice(masks, 0, begin, end), y) * static_cast<double>(end - begin);
    }
    return total / static_cast<double>(m);
  };

  MemorizationResult result;
  result.iou = -1;
  std::vector<std::vector<real>> best_params, best_buffers;
  std::vector<std::int32_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = m;
  // Batch norm needs two samples per dense feature; the encoder is
  // convolutional, so a single frame is still a valid batch.
  const std::size_t batch = std::min(options.batch, m);
  for (std::size_t step = 1; step <= options.max_steps; ++step) {
    if (cursor + batch > m) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::vector<std::int32_t> rows(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                         order.begin() + static_cast<std::ptrdiff_t>(cursor + batch));
    cursor += batch;
    tensor::zero_grad(params);
    const Tensor logits = decoder.forward(encoder.forward(rows_of(frames, rows), Mode::train), Mode::train);
    ops::bce_loss(rows_of(masks, rows), ops::sigmoid(logits)).backward();
    tensor::adam_step(params, adam, options.adam);

    if (step % options.check_every == 0 || step == options.max_steps) {
      const double iou = evaluate();
      if (iou > result.iou) {
        result.iou = iou;
        result.steps = step;
        best_params = snapshot(encoder.parameters());
        best_buffers = snapshot(encoder.buffers());
      }
      if (iou >= options.target_iou) {
        result.reached = true;
        break;
      }
    }
  }
  if (!best_params.empty()) {
    restore(encoder.parameters(), best_params);
    restore(encoder.buffers(), best_buffers);
  }
  tensor::zero_grad(params);
  result.encoder = LatentTargetEncoder(std::move(encoder));
  return result;
}

}  // namespace odyn::models
