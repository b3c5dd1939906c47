#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odyn/graph.hpp"
#include "odyn/layers.hpp"
#include "odyn/optim.hpp"

namespace odyn::models {

using graphnet::AttributedGraph;
using tensor::LayerSpec;
using tensor::Mode;
using tensor::NamedTensor;
using tensor::Rng;
using tensor::Shape;
using tensor::Tensor;

enum class Variant { gn_pos_vel, gn_segm, gn_segm_no_rgbd, gn_no_edges, ap, ap_no_interact, baseline };

const std::vector<Variant>& all_variants();
std::string_view variant_name(Variant v);
/// Accepts the names printed by variant_name; throws std::invalid_argument.
Variant parse_variant(std::string_view name);

enum class EdgeKind { none, pose, mask };

/// What a variant reads and predicts.
struct VariantTraits {
  bool graph_network = false;
  /// Node frame channels, stacked [RGB, mask, depth] or the mask alone.
  std::size_t visual_channels = 5;
  /// Index of the object mask inside the stacked node frame.
  std::size_t mask_channel = 3;
  bool pose = false;
  EdgeKind edges = EdgeKind::none;
  bool interact = false;  // f_interact present
  bool trans = false;     // f_trans present
};
VariantTraits traits(Variant v);

enum class Preset { desk, paper };
std::string_view preset_name(Preset p);
Preset parse_preset(std::string_view name);

/// How a multi-step visual rollout carries state: the updated latent, or the
/// predicted mask re-encoded together with the start frame's RGB and depth.
enum class Feedback { latent, reencode };

/// Layer lists of every network a variant may use. Weighted layers only;
/// hidden ReLU + batch norm are inserted when the networks are built. MLPs
/// whose output feeds a residual or the core list only their hidden layers;
/// the terminal width is the latent width fixed at build time.
struct NetworkSpec {
  std::size_t width = 32, height = 24;            // node frames
  std::size_t edge_width = 8, edge_height = 6;    // segmentation edge masks
  std::vector<LayerSpec> node_encoder;            // [C, H, W] -> [Ce, he, we]
  std::vector<LayerSpec> node_decoder;            // [Ce + extra, he, we] -> [1, H, W]
  std::vector<LayerSpec> control_encoder;         // [6] -> [Du]
  std::vector<LayerSpec> global_decoder;          // [Du] -> [6]
  std::vector<LayerSpec> pose_encoder;            // [6] -> [Dp]
  std::vector<LayerSpec> pose_decoder;            // [Dv] -> [6]
  std::vector<LayerSpec> edge_encoder;            // [9] -> [De]
  std::vector<LayerSpec> edge_decoder;            // [De] -> [9]
  std::vector<LayerSpec> edge_cnn_encoder;        // [1, eh, ew] -> [Cm, hm, wm]
  std::vector<LayerSpec> edge_cnn_decoder;        // [Dm, 1, 1] -> [1, eh, ew]
  std::vector<std::size_t> trans_hidden;          // f_trans
  std::vector<std::size_t> interact_hidden;       // f_interact
  std::vector<std::size_t> core_node_hidden;
  std::vector<std::size_t> core_edge_hidden;
  std::vector<LayerSpec> core_global;             // [..] -> [Du']
};

/// Network widths for a preset. Desk divides the full-size feature maps by 8
/// and the 256-unit MLP layers by 2 and works on 32x24 frames; paper keeps
/// the full widths on 160x120 frames. Transposed stacks are cropped to
/// land exactly on the frame size.
NetworkSpec network_spec(Preset preset);
NetworkSpec network_spec(Preset preset, std::size_t width, std::size_t height);

/// Distributes output cropping over the transposed convolutions of `layers`
/// so that `input` maps to exactly out_h x out_w. Earlier layers take as
/// much as their kernel allows (at most kernel - 1 per side). Throws
/// ShapeError when the uncropped output is smaller than the target or the
/// excess cannot be absorbed.
void fit_transposed_stack(std::vector<LayerSpec>& layers, const Shape& input, std::size_t out_h,
                          std::size_t out_w);

struct ModelConfig {
  Variant variant = Variant::ap;
  Preset preset = Preset::desk;
  std::size_t width = 32, height = 24;
  /// Multi-step state carry; unset means latent for the AP variants and
  /// re-encoding for the baseline.
  std::optional<Feedback> feedback;

  Feedback effective_feedback() const;
};

/// A start graph with the attributes the variant reads (see VariantTraits)
/// and one raw control batch [G, 6] per prediction step.
struct ModelInput {
  AttributedGraph graph;
  std::vector<Tensor> controls;
};

struct StepPrediction {
  Tensor masks;   // [N, 1, H, W] probabilities
  Tensor poses;   // [N, 6] when the variant predicts poses
  Tensor edges;   // [E, 9] or [E, 1, eh, ew] probabilities, when present
  Tensor latent;  // [N, D] node latent that produced the masks (visual variants)
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual const ModelConfig& config() const = 0;
  /// One prediction per control. Throws ShapeError when the input does not
  /// carry the attributes the variant needs.
  virtual std::vector<StepPrediction> forward(const ModelInput& input, Mode mode) = 0;
  virtual std::vector<NamedTensor> parameters() const = 0;
  virtual std::vector<NamedTensor> buffers() const = 0;
  /// Latent width of the node encoder output.
  virtual std::size_t latent_width() const = 0;
};

std::unique_ptr<Predictor> make_predictor(const ModelConfig& config, Rng& rng);

/// Auto-Predictor, its no-interaction ablation and the auto-encoder
/// baseline: per-object encoder, control encoder, optional physics predictor
/// v' = v + f_trans(v̄) + Σ_{j≠i} f_interact(v̄_i, v̄_j), and a decoder that
/// consumes the latent map with the encoded control broadcast as channels.
class VisualPredictor final : public Predictor {
 public:
  VisualPredictor(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const override { return config_; }
  std::vector<StepPrediction> forward(const ModelInput& input, Mode mode) override;
  std::vector<NamedTensor> parameters() const override;
  std::vector<NamedTensor> buffers() const override;
  std::size_t latent_width() const override { return latent_width_; }

  /// Flattened encoder output [N, D] for stacked node frames [N, C, H, W].
  Tensor encode(const Tensor& frames, Mode mode);

  tensor::Sequential& encoder() { return encoder_; }
  tensor::Sequential& trans() { return trans_; }
  tensor::Sequential& interact() { return interact_; }

 private:
  Tensor decode(const Tensor& latent, const Tensor& control, Mode mode);

  ModelConfig config_;
  VariantTraits traits_;
  Shape latent_map_;
  std::size_t latent_width_ = 0;
  tensor::Sequential encoder_, control_encoder_, decoder_, trans_, interact_;
};

/// Encode-process-decode graph network for the four GN variants.
class GNPredictor final : public Predictor {
 public:
  GNPredictor(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const override { return config_; }
  std::vector<StepPrediction> forward(const ModelInput& input, Mode mode) override;
  std::vector<NamedTensor> parameters() const override;
  std::vector<NamedTensor> buffers() const override;
  std::size_t latent_width() const override { return node_width_; }

 private:
  ModelConfig config_;
  VariantTraits traits_;
  Shape latent_map_;
  std::size_t visual_width_ = 0, pose_width_ = 0, node_width_ = 0, edge_width_ = 0, global_width_ = 0;
  tensor::Sequential node_encoder_, pose_encoder_, edge_encoder_, control_encoder_;
  tensor::Sequential core_edge_, core_node_, core_global_;
  tensor::Sequential node_decoder_, pose_decoder_, edge_decoder_, global_decoder_;
};

/// Ground truth for one prediction step, shaped like StepPrediction.
struct StepTarget {
  Tensor masks;  // [N, 1, H, W] in {0, 1}
  Tensor poses;  // [N, 6]
  Tensor edges;  // [E, 9] or [E, 1, eh, ew]
};

/// (1/n) Σ_t [ edge term + mean_i (BCE(S_i, Ŝ_i) + mean((p_i - p̂_i)²)) ] with
/// every squared difference averaged over vector components, or summed over
/// them when `sum_components` is set. Edge masks use BCE. Terms a variant does
/// not predict are left out. Throws ShapeError on count or shape mismatches.
Tensor loss_eq1(const std::vector<StepTarget>& targets, const std::vector<StepPrediction>& predictions,
                Variant variant, bool sum_components = false);

/// IoU of two masks binarized at 0.5. Two empty masks agree perfectly and
/// score 1. Throws ShapeError on a size mismatch.
double mask_iou(std::span<const real> truth, std::span<const real> predicted);
/// Mean mask_iou over the rows of [N, 1, H, W] tensors.
double mean_mask_iou(const Tensor& truth, const Tensor& predicted);

/// Frozen encoder of the memorization auto-encoder.
class LatentTargetEncoder {
 public:
  LatentTargetEncoder() = default;
  LatentTargetEncoder(tensor::Sequential encoder) : encoder_(std::move(encoder)) {}

  bool defined() const { return !encoder_.layers().empty(); }
  /// Eval-mode forward without recording; [N, C, H, W] -> [N, D].
  Tensor encode(const Tensor& frames) const;
  std::vector<NamedTensor> parameters() const { return encoder_.parameters(); }
  std::vector<NamedTensor> buffers() const { return encoder_.buffers(); }
  const tensor::Sequential& network() const { return encoder_; }

 private:
  mutable tensor::Sequential encoder_;
};

/// Untrained encoder with the node-encoder architecture of `config`, the
/// shape a checkpointed latent target is loaded into.
LatentTargetEncoder make_latent_target(const ModelConfig& config, Rng& rng);

/// Mean over steps of the mean squared difference between predicted node
/// latents and the frozen encoding of the ground-truth frames.
Tensor latent_loss(const std::vector<Tensor>& predicted, const std::vector<Tensor>& target_frames,
                   const LatentTargetEncoder& target);

struct MemorizationOptions {
  std::size_t max_steps = 2000;
  std::size_t batch = 30;
  double target_iou = 0.95;
  /// Steps between train-set IoU checks.
  std::size_t check_every = 100;
  tensor::AdamOptions adam{};
};

struct MemorizationResult {
  LatentTargetEncoder encoder;
  double iou = 0;
  std::size_t steps = 0;
  bool reached = false;
};

/// Trains encoder + decoder with the node-encoder layer specs on `frames`
/// ([M, C, H, W] stacked node frames, masks at traits.mask_channel) to
/// reconstruct the masks, and returns the encoder. Stops at target_iou or
/// max_steps, whichever comes first; the best encoder seen is returned.
MemorizationResult pretrain_memorization_ae(const Tensor& frames, const ModelConfig& config,
                                            const MemorizationOptions& options, Rng& rng);

/// Everything needed to resume training: the configuration, predictor
/// parameters and buffers, optimizer moments, the frozen latent target and
/// the curriculum stage reached.
struct Checkpoint {
  ModelConfig model;
  std::string train_config;  // JSON of the training configuration
  std::uint32_t stage = 0;   // completed curriculum stages
  std::uint32_t horizon = 1;
  std::vector<NamedTensor> parameters;
  std::vector<NamedTensor> buffers;
  tensor::AdamState adam;
  std::vector<NamedTensor> latent_target;  // parameters then buffers
};

inline constexpr std::uint32_t checkpoint_version = 1;

/// Little-endian "ODCK" container with f32 payloads.
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies named values into `into` by name. Throws ShapeError on a missing
/// name or a shape mismatch.
void load_named(const std::vector<NamedTensor>& from, const std::vector<NamedTensor>& into);

}  // namespace odyn::models
