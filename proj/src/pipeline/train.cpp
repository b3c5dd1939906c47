#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "odyn/optim.hpp"
#include "odyn/pipeline.hpp"

namespace odyn::pipeline {

namespace fs = std::filesystem;
namespace ops = odyn::tensor;
using nlohmann::json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (horizon == 0) fail("horizon must be at least 1");
  if (epochs == 0) fail("epochs must be at least 1");
  if (curriculum && epochs < horizon) {
    fail("epochs (" + std::to_string(epochs) + ") must be at least the horizon (" + std::to_string(horizon) +
         ") so every curriculum stage gets an epoch");
  }
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) fail("learning rate must be positive");
  if (batch_size < 2) fail("batch size must be at least 2 (batch norm)");
  if (!(latent_weight >= 0) || !std::isfinite(latent_weight)) fail("latent weight must be non-negative");
  if (memorization.batch == 0 || memorization.check_every == 0) fail("memorization batch and check interval must be positive");
  if (max_steps != 0 && max_steps < (curriculum ? horizon : 1)) fail("max steps must leave every stage a step");
  if (model.width == 0 || model.height == 0) fail("frame size must be positive");
}

namespace {

std::string feedback_name(const std::optional<models::Feedback>& f) {
  if (!f) return "default";
  return *f == models::Feedback::latent ? "latent" : "reencode";
}

std::optional<models::Feedback> parse_feedback(const std::string& s) {
  if (s == "default") return std::nullopt;
  if (s == "latent") return models::Feedback::latent;
  if (s == "reencode") return models::Feedback::reencode;
  throw std::invalid_argument("unknown feedback '" + s + "' (expected default, latent or reencode)");
}

}  // namespace

std::string to_json(const TrainConfig& cfg) {
  json j;
  j["variant"] = std::string(models::variant_name(cfg.model.variant));
  j["preset"] = std::string(models::preset_name(cfg.model.preset));
  j["width"] = cfg.model.width;
  j["height"] = cfg.model.height;
  j["feedback"] = feedback_name(cfg.model.feedback);
  j["horizon"] = cfg.horizon;
  j["epochs"] = cfg.epochs;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["curriculum"] = cfg.curriculum;
  j["latent_weight"] = cfg.latent_weight;
  j["sum_components"] = cfg.sum_components;
  j["seed"] = cfg.seed;
  j["train_data"] = cfg.train_data.string();
  j["out_dir"] = cfg.out_dir.string();
  j["max_steps"] = cfg.max_steps;
  j["memorization"] = {{"max_steps", cfg.memorization.max_steps},
                       {"batch", cfg.memorization.batch},
                       {"target_iou", cfg.memorization.target_iou},
                       {"check_every", cfg.memorization.check_every}};
  j["resume"] = cfg.resume;
  return j.dump(2);
}

void merge_json(TrainConfig& into, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("train config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  TrainConfig c = into;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "variant") c.model.variant = models::parse_variant(v.get<std::string>());
      else if (key == "preset") c.model.preset = models::parse_preset(v.get<std::string>());
      else if (key == "width") c.model.width = v.get<std::size_t>();
      else if (key == "height") c.model.height = v.get<std::size_t>();
      else if (key == "feedback") c.model.feedback = parse_feedback(v.get<std::string>());
      else if (key == "horizon") c.horizon = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "curriculum") c.curriculum = v.get<bool>();
      else if (key == "latent_weight") c.latent_weight = v.get<double>();
      else if (key == "sum_components") c.sum_components = v.get<bool>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "train_data") c.train_data = v.get<std::string>();
      else if (key == "out_dir") c.out_dir = v.get<std::string>();
      else if (key == "max_steps") c.max_steps = v.get<std::size_t>();
      else if (key == "resume") c.resume = v.get<bool>();
      else if (key == "memorization") {
        for (const auto& [mk, mv] : v.items()) {
          if (mk == "max_steps") c.memorization.max_steps = mv.get<std::size_t>();
          else if (mk == "batch") c.memorization.batch = mv.get<std::size_t>();
          else if (mk == "target_iou") c.memorization.target_iou = mv.get<double>();
          else if (mk == "check_every") c.memorization.check_every = mv.get<std::size_t>();
          else throw std::invalid_argument("unknown train config key 'memorization." + mk + "'");
        }
      } else {
        throw std::invalid_argument("unknown train config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("train config has a field of the wrong type: ") + e.what());
  }
  into = c;
}

std::vector<std::size_t> stage_epochs(std::size_t epochs, std::size_t stages) {
  if (stages == 0) throw std::invalid_argument("stage_epochs: no stages");
  std::vector<std::size_t> out(stages, epochs / stages);
  for (std::size_t k = 0; k < epochs % stages; ++k) ++out[k];
  return out;
}

fs::path stage_checkpoint_path(const fs::path& out_dir, std::size_t stage) {
  return out_dir / ("stage_" + std::to_string(stage) + ".odck");
}

namespace {

std::vector<NamedTensor> snapshot(const std::vector<NamedTensor>& live) {
  std::vector<NamedTensor> out;
  out.reserve(live.size());
  for (const auto& nt : live) out.push_back({nt.name, nt.tensor.detach().clone()});
  return out;
}

std::vector<NamedTensor> joined(std::vector<NamedTensor> a, const std::vector<NamedTensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

bool uses_latent_loss(Variant v) { return v == Variant::ap || v == Variant::ap_no_interact; }

// Seeds derived from the run seed; fixed offsets keep the streams apart.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return seed * 0x9E3779B97F4A7C15ull + stream;
}

Tensor all_node_frames(std::span<const sim::Episode> episodes, const ModelConfig& config) {
  const auto tr = models::traits(config.variant);
  std::vector<Tensor> parts;
  for (const auto& ep : episodes) {
    for (std::size_t t = 0; t < ep.length(); ++t) parts.push_back(node_frames(ep, t, tr));
  }
  if (parts.empty()) throw std::invalid_argument("training data holds no frames");
  return parts.size() == 1 ? parts.front() : ops::concat(parts, 0);
}

// Highest stage with a readable checkpoint in out_dir, or 0.
std::size_t last_stage_on_disk(const fs::path& out_dir, std::size_t stages) {
  for (std::size_t k = stages; k >= 1; --k) {
    if (fs::exists(stage_checkpoint_path(out_dir, k))) return k;
  }
  return 0;
}

void require_same_model(const ModelConfig& a, const ModelConfig& b, const fs::path& path) {
  if (a.variant != b.variant || a.preset != b.preset || a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("checkpoint " + path.string() + " holds a " +
                                std::string(models::variant_name(b.variant)) + " model that does not match the " +
                                std::string(models::variant_name(a.variant)) + " configuration");
  }
}

}  // namespace

std::unique_ptr<models::Predictor> load_predictor(const models::Checkpoint& ckpt) {
  Rng rng(0);
  auto model = models::make_predictor(ckpt.model, rng);
  models::load_named(ckpt.parameters, model->parameters());
  models::load_named(ckpt.buffers, model->buffers());
  return model;
}

TrainResult train(const TrainConfig& cfg, std::span<const sim::Episode> episodes, std::ostream* log) {
  cfg.validate();
  if (episodes.empty()) throw std::invalid_argument("training data holds no episodes");
  const bool to_disk = !cfg.out_dir.empty();
  if (to_disk) fs::create_directories(cfg.out_dir);

  const std::size_t stages = cfg.curriculum ? cfg.horizon : 1;
  const auto epochs = stage_epochs(cfg.epochs, stages);
  const auto step_caps = cfg.max_steps ? stage_epochs(cfg.max_steps, stages) : std::vector<std::size_t>(stages, 0);
  const std::string config_json = to_json(cfg);

  Rng init_rng(stream_seed(cfg.seed, 1));
  auto model = models::make_predictor(cfg.model, init_rng);
  auto params = model->parameters();
  auto state = ops::AdamState::for_parameters(params);
  ops::AdamOptions adam;
  adam.learning_rate = static_cast<real>(cfg.learning_rate);

  TrainResult result;
  models::LatentTargetEncoder target;
  std::size_t done_stages = 0;

  if (cfg.resume && to_disk) {
    done_stages = last_stage_on_disk(cfg.out_dir, stages);
    if (done_stages > 0) {
      const auto path = stage_checkpoint_path(cfg.out_dir, done_stages);
      const auto ckpt = models::read_checkpoint(path);
      require_same_model(cfg.model, ckpt.model, path);
      models::load_named(ckpt.parameters, params);
      models::load_named(ckpt.buffers, model->buffers());
      state = ckpt.adam;
      if (uses_latent_loss(cfg.model.variant)) {
        Rng unused(0);
        target = models::make_latent_target(cfg.model, unused);
        models::load_named(ckpt.latent_target, joined(target.parameters(), target.buffers()));
      }
      for (std::size_t k = 1; k <= done_stages; ++k) result.stage_checkpoints.push_back(stage_checkpoint_path(cfg.out_dir, k));
      if (log) *log << "resuming after stage " << done_stages << "/" << stages << " from " << path.string() << "\n";
    }
  }

  if (uses_latent_loss(cfg.model.variant) && !target.defined()) {
    Rng ae_rng(stream_seed(cfg.seed, 2));
    auto frames = all_node_frames(episodes, cfg.model);
    if (log) *log << "pretraining latent target on " << frames.dim(0) << " node frames\n";
    auto mem = models::pretrain_memorization_ae(frames, cfg.model, cfg.memorization, ae_rng);
    result.memorization_iou = mem.iou;
    if (log) {
      *log << "latent target: train IoU " << mem.iou << " after " << mem.steps << " steps\n";
      if (!mem.reached) {
        *log << "warning: latent target reached IoU " << mem.iou << ", below the " << cfg.memorization.target_iou
             << " target; continuing with the best encoder\n";
      }
    }
    target = std::move(mem.encoder);
  }

  auto make_checkpoint = [&](std::size_t stage, std::size_t horizon) {
    models::Checkpoint c;
    c.model = cfg.model;
    c.train_config = config_json;
    c.stage = static_cast<std::uint32_t>(stage);
    c.horizon = static_cast<std::uint32_t>(horizon);
    c.parameters = snapshot(model->parameters());
    c.buffers = snapshot(model->buffers());
    c.adam = state;
    if (target.defined()) c.latent_target = snapshot(joined(target.parameters(), target.buffers()));
    return c;
  };

  std::size_t total_steps = 0;
  for (std::size_t k = done_stages + 1; k <= stages; ++k) {
    const std::size_t horizon = cfg.curriculum ? k : cfg.horizon;
    Rng data_rng(stream_seed(cfg.seed, 1000 + k));
    if (log) {
      *log << "stage " << k << "/" << stages << ": horizon " << horizon << ", " << epochs[k - 1] << " epochs\n";
    }
    std::size_t stage_steps = 0;
    const std::size_t cap = step_caps[k - 1];
    for (std::size_t e = 1; e <= epochs[k - 1] && !(cap && stage_steps >= cap); ++e) {
      const auto batches = make_batches(episodes, horizon, cfg.batch_size, data_rng);
      if (batches.empty()) {
        throw std::invalid_argument("no training batch: episodes are too short for horizon " +
                                    std::to_string(horizon) + " or no object count has two samples");
      }
      double loss_sum = 0;
      std::size_t loss_count = 0;
      for (const auto& samples : batches) {
        if (cap && stage_steps >= cap) break;
        const auto batch = make_batch(episodes, samples, horizon, cfg.model);
        ops::zero_grad(params);
        const auto preds = model->forward(batch.input, ops::Mode::train);
        Tensor loss = models::loss_eq1(batch.targets, preds, cfg.model.variant, cfg.sum_components);
        if (uses_latent_loss(cfg.model.variant) && cfg.latent_weight != 0) {
          std::vector<Tensor> latents;
          for (const auto& p : preds) latents.push_back(p.latent);
          loss = ops::add(loss, ops::scale(models::latent_loss(latents, batch.target_frames, target),
                                           static_cast<real>(cfg.latent_weight)));
        }
        const double value = static_cast<double>(loss.item());
        const std::string where = "stage " + std::to_string(k) + " epoch " + std::to_string(e) + " step " +
                                  std::to_string(total_steps + 1);
        if (!std::isfinite(value)) throw NumericalFailure("non-finite loss at " + where);
        loss.backward();
        try {
          ops::adam_step(params, state, adam);
        } catch (const ops::NumericError& err) {
          throw NumericalFailure(std::string(err.what()) + " at " + where);
        }
        loss_sum += value;
        ++loss_count;
        ++stage_steps;
        ++total_steps;
      }
      EpochLog entry{k, e, total_steps, loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0};
      result.epochs.push_back(entry);
      if (log) {
        *log << "stage " << k << "/" << stages << " epoch " << e << "/" << epochs[k - 1] << " steps " << total_steps
             << " loss " << entry.mean_loss << "\n";
        log->flush();
      }
    }
    if (to_disk) {
      const auto path = stage_checkpoint_path(cfg.out_dir, k);
      models::write_checkpoint(make_checkpoint(k, horizon), path);
      result.stage_checkpoints.push_back(path);
    }
  }

  result.checkpoint = make_checkpoint(stages, cfg.curriculum ? stages : cfg.horizon);
  if (to_disk) models::write_checkpoint(result.checkpoint, cfg.out_dir / final_checkpoint_name);
  return result;
}

TrainResult train(const TrainConfig& cfg, std::ostream* log, unsigned threads) {
  if (cfg.train_data.empty()) throw std::invalid_argument("train config: no training data path");
  const auto episodes = load_dataset(cfg.train_data, threads);
  return train(cfg, episodes, log);
}

}  // namespace odyn::pipeline
