#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "odyn/episode.hpp"
#include "odyn/models.hpp"

namespace odyn::pipeline {

using graphnet::AttributedGraph;
using models::ModelConfig;
using models::Variant;
using tensor::NamedTensor;
using tensor::Rng;
using tensor::Shape;
using tensor::Tensor;

/// Raised when training cannot continue: a non-finite loss or gradient. The
/// message names the stage, epoch and optimizer step.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Episode -> graph attributes. Step t of an episode holds the frames, object
// states and the control that leads to step t + 1.

/// [N, C, H, W]: RGB, mask, depth (C = 5), or the mask alone for variants
/// without RGB and depth.
Tensor node_frames(const sim::Episode& ep, std::size_t t, const models::VariantTraits& traits);
/// [N, 1, H, W] object masks in {0, 1}.
Tensor object_masks(const sim::Episode& ep, std::size_t t);
/// [N, 6] position ⊕ velocity.
Tensor object_poses(const sim::Episode& ep, std::size_t t);
/// [N(N - 1), 9] sender velocity ⊕ previous position ⊕ position, in the edge
/// order of graphnet::fully_connected. At t = 0 the previous position is the
/// current one.
Tensor edge_poses(const sim::Episode& ep, std::size_t t);
/// [N(N - 1), 1, eh, ew] sender masks reduced to the edge resolution. A cell
/// is set when any pixel of its block is set.
Tensor edge_masks(const sim::Episode& ep, std::size_t t, std::size_t eh, std::size_t ew);
/// Block-max reduction of an h x w binary mask to eh x ew. Cell (y, x) covers
/// rows [y h / eh, ceil((y + 1) h / eh)) and the matching columns.
std::vector<real> downsample_mask(std::span<const std::uint8_t> mask, std::size_t h, std::size_t w, std::size_t eh,
                                  std::size_t ew);
/// [1, 6] pusher position ⊕ velocity at t + 1.
Tensor control(const sim::Episode& ep, std::size_t t);

/// The graph of step t with the attributes `config.variant` reads. Throws
/// std::invalid_argument when the episode does not match the configured
/// frame size or the variant cannot represent it.
AttributedGraph episode_to_graph(const sim::Episode& ep, std::size_t t, const ModelConfig& config);
std::vector<AttributedGraph> episode_to_graphs(const sim::Episode& ep, const ModelConfig& config);

/// Ground truth of step t shaped like the variant's predictions.
models::StepTarget step_target(const sim::Episode& ep, std::size_t t, const ModelConfig& config);

/// Lays graphs out back to back; sender and receiver indices are offset.
AttributedGraph batch_graphs(std::span<const AttributedGraph> graphs);

// ---------------------------------------------------------------------------
// Mini-batches.

/// A training item: predict steps start + 1 .. start + horizon of an episode.
struct Sample {
  std::size_t episode = 0;
  std::size_t start = 0;
};

struct Batch {
  models::ModelInput input;
  std::vector<models::StepTarget> targets;  // one per step
  std::vector<Tensor> target_frames;        // node frames of every target step
};

/// Every valid (episode, start) for the horizon.
std::vector<Sample> all_samples(std::span<const sim::Episode> episodes, std::size_t horizon);

/// Groups samples by object count, shuffles within groups, cuts batches of
/// `batch_size` and shuffles the batch order. A trailing chunk of one sample
/// joins the previous batch (batch norm needs two); a group holding a single
/// sample is dropped.
std::vector<std::vector<Sample>> make_batches(std::span<const sim::Episode> episodes, std::size_t horizon,
                                              std::size_t batch_size, Rng& rng);

Batch make_batch(std::span<const sim::Episode> episodes, std::span<const Sample> samples, std::size_t horizon,
                 const ModelConfig& config);

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  ModelConfig model;
  std::size_t horizon = 1;
  std::size_t epochs = 13;
  double learning_rate = 1e-3;
  std::size_t batch_size = 30;
  bool curriculum = true;
  /// Weight of the latent loss for the AP variants.
  double latent_weight = 1.0;
  /// Squared-difference loss terms summed over vector components instead
  /// of averaged.
  bool sum_components = false;
  std::uint64_t seed = 0;
  std::filesystem::path train_data;
  std::filesystem::path out_dir;
  /// Cap on optimizer steps over the whole run, split across stages like the
  /// epochs; 0 means the epochs alone decide.
  std::size_t max_steps = 0;
  /// Latent-target auto-encoder budget (AP variants only).
  models::MemorizationOptions memorization{};
  /// Continue after the last stage checkpoint found in out_dir.
  bool resume = false;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

std::string to_json(const TrainConfig& cfg);
/// Fields missing from the JSON keep the values already in `into`.
void merge_json(TrainConfig& into, const std::string& json);

/// Epochs of each curriculum stage: floor(epochs / stages) each, the
/// remainder going one apiece to the earliest stages.
std::vector<std::size_t> stage_epochs(std::size_t epochs, std::size_t stages);

struct EpochLog {
  std::size_t stage = 0;   // 1-based
  std::size_t epoch = 0;   // 1-based within the stage
  std::size_t steps = 0;   // optimizer steps so far in the run
  double mean_loss = 0;
};

struct TrainResult {
  models::Checkpoint checkpoint;
  std::vector<EpochLog> epochs;
  std::vector<std::filesystem::path> stage_checkpoints;
  double memorization_iou = -1;  // AP variants
};

/// Progress lines ("stage k/n ...", per-epoch losses) go to `log` when set.
TrainResult train(const TrainConfig& cfg, std::span<const sim::Episode> episodes, std::ostream* log = nullptr);
/// Loads the dataset named by cfg.train_data and trains on it.
TrainResult train(const TrainConfig& cfg, std::ostream* log = nullptr, unsigned threads = 1);

inline constexpr const char* final_checkpoint_name = "model.odck";
std::filesystem::path stage_checkpoint_path(const std::filesystem::path& out_dir, std::size_t stage);

/// Predictor restored from a checkpoint.
std::unique_ptr<models::Predictor> load_predictor(const models::Checkpoint& ckpt);

// ---------------------------------------------------------------------------
// Rollout and evaluation.

/// Predicted masks [N, 1, H, W] for steps start + 1 .. start + n, using the
/// recorded controls of steps start .. start + n - 1. Throws
/// std::out_of_range when start + n runs past the episode.
std::vector<Tensor> rollout(models::Predictor& model, const sim::Episode& ep, std::size_t start, std::size_t n);

/// Any mask source an evaluation can score: (episode, start, n) -> masks.
using RolloutFn = std::function<std::vector<Tensor>(const sim::Episode&, std::size_t, std::size_t)>;

/// IoU of two binary masks; both empty gives 1. Throws ShapeError on a size
/// mismatch and std::invalid_argument on a non-binary value.
double iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Every start step with a full horizon, or only the first.
enum class EvalMode { sliding, single };

struct EvalReport {
  std::string dataset;
  std::string variant;
  std::size_t horizon = 1;
  std::uint64_t seed = 0;
  EvalMode mode = EvalMode::sliding;
  double mean_iou = 0;
  std::size_t n_items = 0;                     // (episode, step, object) triples
  std::vector<double> per_step_iou;            // by rollout step 1..n
  std::vector<std::pair<std::size_t, double>> per_object_count;  // (N, mean IoU)
};

/// Rolls every episode out from each start (per `mode`), rounds predictions
/// at 0.5 and averages IoU over the flattened (episode, step, object)
/// population. Episodes are scored on up to `threads` workers; the result
/// does not depend on the count. Throws std::invalid_argument on an empty
/// dataset or when no episode is long enough.
EvalReport evaluate(const RolloutFn& model, std::span<const sim::Episode> episodes, std::size_t horizon,
                    EvalMode mode = EvalMode::sliding, unsigned threads = 1);

/// Convenience: restores the checkpoint's predictor, evaluating in eval mode.
EvalReport evaluate(const models::Checkpoint& ckpt, std::span<const sim::Episode> episodes, std::size_t horizon,
                    EvalMode mode = EvalMode::sliding, unsigned threads = 1);

/// Reads every episode listed by a dataset manifest, decoding on up to
/// `threads` workers.
std::vector<sim::Episode> load_dataset(const std::filesystem::path& dir_or_manifest, unsigned threads = 1);

inline constexpr const char* report_csv_header = "dataset,variant,horizon,mean_iou,n_items,seed";
std::string report_csv_row(const EvalReport& r);
/// Header plus one row per report.
void write_report_csv(std::span<const EvalReport> reports, const std::filesystem::path& path);
/// Parses a file written by write_report_csv; throws sim::IoError when
/// malformed.
std::vector<EvalReport> read_report_csv(const std::filesystem::path& path);
/// Fixed-width text table of the reports including the per-step breakdown.
std::string report_table(std::span<const EvalReport> reports);

}  // namespace odyn::pipeline
