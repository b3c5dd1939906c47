#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "odyn/pipeline.hpp"
#include "odyn/sim.hpp"

using namespace odyn;
using namespace odyn::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("odyn_test_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<sim::Episode> generated(std::size_t count, std::uint64_t seed, const std::string& role = "train3") {
  const auto cfg = sim::role_config(role);
  std::vector<sim::Episode> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(sim::generate_episode(cfg, seed + i));
  return out;
}

// Episode carrying only masks: enough for the evaluation harness.
sim::Episode mask_episode(std::size_t w, std::size_t h, std::size_t n, const std::vector<std::vector<std::uint8_t>>& steps) {
  sim::Episode ep;
  ep.width = static_cast<std::uint32_t>(w);
  ep.height = static_cast<std::uint32_t>(h);
  ep.num_objects = static_cast<std::uint32_t>(n);
  for (const auto& masks : steps) {
    REQUIRE(masks.size() == n * w * h);
    sim::Step s;
    s.masks = masks;
    ep.steps.push_back(std::move(s));
  }
  return ep;
}

Tensor mask_tensor(std::size_t n, std::size_t h, std::size_t w, const std::vector<double>& v) {
  return Tensor(Shape{n, 1, h, w}, std::vector<real>(v.begin(), v.end()));
}

TrainConfig tiny_config(Variant v, std::size_t horizon) {
  TrainConfig cfg;
  cfg.model.variant = v;
  cfg.horizon = horizon;
  cfg.epochs = horizon;
  cfg.batch_size = 4;
  cfg.max_steps = horizon;
  cfg.seed = 5;
  cfg.memorization.max_steps = 4;
  cfg.memorization.batch = 4;
  cfg.memorization.check_every = 2;
  return cfg;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(double(a.at(i)) - double(b.at(i))));
  return d;
}

}  // namespace

// --- iou ---------------------------------------------------------------------

TEST_CASE("iou matches a bit-count oracle on every pair of 3x3 masks") {
  auto unpack = [](unsigned bits) {
    std::vector<std::uint8_t> m(9);
    for (unsigned i = 0; i < 9; ++i) m[i] = (bits >> i) & 1u;
    return m;
  };
  std::vector<std::vector<std::uint8_t>> masks;
  for (unsigned a = 0; a < 512; ++a) masks.push_back(unpack(a));
  std::size_t mismatches = 0;
  for (unsigned a = 0; a < 512; ++a) {
    for (unsigned b = 0; b < 512; ++b) {
      const int inter = std::popcount(a & b), uni = std::popcount(a | b);
      const double expected = uni == 0 ? 1.0 : double(inter) / double(uni);
      const double got = iou(masks[a], masks[b]);
      if (got != expected || got != iou(masks[b], masks[a])) ++mismatches;
      if ((got == 1.0) != (a == b)) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("iou of a block and its shifted copy is one third") {
  // 4x4 grid: 2x2 block at columns 0-1 and at columns 1-2.
  std::vector<std::uint8_t> a(16, 0), b(16, 0);
  for (int y = 0; y < 2; ++y) {
    a[y * 4 + 0] = a[y * 4 + 1] = 1;
    b[y * 4 + 1] = b[y * 4 + 2] = 1;
  }
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(iou(a, a) == 1.0);
  std::vector<std::uint8_t> far(16, 0);
  far[15] = 1;
  CHECK(iou(a, far) == 0.0);
  const std::vector<std::uint8_t> empty(16, 0);
  CHECK(iou(empty, empty) == 1.0);
  CHECK_THROWS_AS(iou(a, std::vector<std::uint8_t>(9, 0)), tensor::ShapeError);
  std::vector<std::uint8_t> bad = a;
  bad[0] = 2;
  CHECK_THROWS_AS(iou(bad, a), std::invalid_argument);
}

// --- evaluate -----------------------------------------------------------------

namespace {

// Two episodes of 2x2 frames whose four scored items have IoU 1, 0.5, 0, 0.5.
struct MicroDataset {
  std::vector<sim::Episode> episodes;
  RolloutFn model;
  std::vector<double> item_ious;
};

MicroDataset micro_dataset() {
  MicroDataset d;
  // Episode 0: two objects, one transition.
  d.episodes.push_back(mask_episode(2, 2, 2, {{1, 0, 0, 0, 0, 1, 0, 0}, {1, 1, 0, 0, 0, 0, 1, 1}}));
  // Episode 1: one object, two transitions.
  d.episodes.push_back(mask_episode(2, 2, 1, {{1, 0, 0, 0}, {0, 0, 1, 0}, {1, 1, 1, 1}}));
  d.model = [](const sim::Episode& ep, std::size_t start, std::size_t n) {
    REQUIRE(n == 1);
    if (ep.num_objects == 2) {
      // object 0 exact; object 1 predicts one of two pixels plus one wrong.
      return std::vector<Tensor>{mask_tensor(2, 2, 2, {0.9, 0.5, 0.1, 0.0, 0.0, 0.2, 0.7, 0.0})};
    }
    if (start == 0) return std::vector<Tensor>{mask_tensor(1, 2, 2, {0.6, 0.0, 0.49, 0.0})};  // disjoint
    return std::vector<Tensor>{mask_tensor(1, 2, 2, {1.0, 0.0, 0.5, 0.0})};                // 2 of 4
  };
  d.item_ious = {1.0, 0.5, 0.0, 0.5};
  return d;
}

}  // namespace

TEST_CASE("evaluate averages the flattened item list") {
  const auto d = micro_dataset();
  const auto r = evaluate(d.model, d.episodes, 1);
  const double brute = std::accumulate(d.item_ious.begin(), d.item_ious.end(), 0.0) / double(d.item_ious.size());
  CHECK(r.n_items == 4);
  CHECK(r.mean_iou == doctest::Approx(brute).epsilon(1e-15));
  CHECK(r.mean_iou == doctest::Approx(0.5).epsilon(1e-15));
  REQUIRE(r.per_step_iou.size() == 1);
  CHECK(r.per_step_iou[0] == doctest::Approx(0.5));
  REQUIRE(r.per_object_count.size() == 2);
  CHECK(r.per_object_count[0] == std::pair<std::size_t, double>{1, 0.25});
  CHECK(r.per_object_count[1] == std::pair<std::size_t, double>{2, 0.75});

  const auto single = evaluate(d.model, d.episodes, 1, EvalMode::single);
  CHECK(single.n_items == 3);
  CHECK(single.mean_iou == doctest::Approx((1.0 + 0.5 + 0.0) / 3.0));
}

TEST_CASE("evaluate: oracle scores 1, an all-zero model scores 0 on nonempty targets") {
  const auto episodes = generated(4, 300);
  RolloutFn oracle = [](const sim::Episode& ep, std::size_t start, std::size_t n) {
    std::vector<Tensor> out;
    for (std::size_t k = 1; k <= n; ++k) out.push_back(object_masks(ep, start + k));
    return out;
  };
  for (std::size_t h : {1u, 3u}) {
    const auto r = evaluate(oracle, episodes, h);
    CHECK(r.mean_iou == 1.0);
    CHECK(r.per_step_iou.size() == h);
  }

  const auto d = micro_dataset();
  RolloutFn zero = [](const sim::Episode& ep, std::size_t, std::size_t n) {
    return std::vector<Tensor>(n, Tensor(Shape{ep.num_objects, 1, ep.height, ep.width},
                                         std::vector<real>(ep.num_objects * ep.pixels(), real(0.49))));
  };
  CHECK(evaluate(zero, d.episodes, 1).mean_iou == 0.0);
}

TEST_CASE("evaluate is independent of the worker count and rejects unusable data") {
  const auto episodes = generated(5, 310);
  // Deterministic pseudo-model: noise seeded by (episode length, start).
  RolloutFn noisy = [](const sim::Episode& ep, std::size_t start, std::size_t n) {
    std::vector<Tensor> out;
    for (std::size_t k = 1; k <= n; ++k) {
      auto m = object_masks(ep, start + k);
      std::mt19937_64 r(ep.length() * 100 + start * 10 + k);
      for (auto& v : m.values()) {
        if (r() % 5 == 0) v = real(1) - v;
      }
      out.push_back(m);
    }
    return out;
  };
  const auto one = evaluate(noisy, episodes, 2, EvalMode::sliding, 1);
  const auto four = evaluate(noisy, episodes, 2, EvalMode::sliding, 4);
  CHECK(one.mean_iou == four.mean_iou);
  CHECK(one.n_items == four.n_items);
  CHECK(one.per_step_iou == four.per_step_iou);
  CHECK(one.mean_iou > 0.0);
  CHECK(one.mean_iou < 1.0);

  CHECK_THROWS_AS(evaluate(noisy, std::span<const sim::Episode>{}, 1), std::invalid_argument);
  CHECK_THROWS_AS(evaluate(noisy, episodes, 100), std::invalid_argument);
}

// --- episode -> graph ----------------------------------------------------------

TEST_CASE("pose-edge graphs: N(N-1) edges holding sender velocity, previous and current position") {
  const auto ep = generated(1, 320).front();
  ModelConfig cfg;
  cfg.variant = Variant::gn_pos_vel;
  REQUIRE(ep.num_objects == 3);
  const auto g0 = episode_to_graph(ep, 0, cfg);
  CHECK(g0.num_nodes() == 3);
  CHECK(g0.num_edges() == 6);
  CHECK(g0.nodes.visual.shape() == Shape{3, 5, 24, 32});
  CHECK(g0.nodes.pose.shape() == Shape{3, 6});
  CHECK(g0.globals.shape() == Shape{1, 6});
  for (std::size_t e = 0; e < 6; ++e) {
    const auto s = static_cast<std::size_t>(g0.senders[e]);
    CHECK(g0.senders[e] != g0.receivers[e]);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(g0.edges.pose.at(e * 9 + k) == ep.steps[0].vel[s * 3 + k]);
      CHECK(g0.edges.pose.at(e * 9 + 3 + k) == ep.steps[0].pos[s * 3 + k]);  // duplicated at t = 0
      CHECK(g0.edges.pose.at(e * 9 + 6 + k) == ep.steps[0].pos[s * 3 + k]);
    }
  }
  const auto g2 = episode_to_graph(ep, 2, cfg);
  for (std::size_t e = 0; e < 6; ++e) {
    const auto s = static_cast<std::size_t>(g2.senders[e]);
    for (std::size_t k = 0; k < 3; ++k) CHECK(g2.edges.pose.at(e * 9 + 3 + k) == ep.steps[1].pos[s * 3 + k]);
  }
  // Frame channels: RGB, mask, depth.
  const std::size_t hw = ep.pixels();
  const auto mask1 = ep.mask(0, 1);
  for (std::size_t p = 0; p < hw; p += 37) {
    CHECK(g0.nodes.visual.at((1 * 5 + 3) * hw + p) == mask1[p]);
    CHECK(g0.nodes.visual.at((1 * 5 + 0) * hw + p) == ep.steps[0].rgb[p * 3]);
    CHECK(g0.nodes.visual.at((1 * 5 + 4) * hw + p) == ep.steps[0].depth[p]);
  }
}

TEST_CASE("variant-specific graph attributes") {
  const auto ep = generated(1, 321).front();
  ModelConfig cfg;
  cfg.variant = Variant::gn_no_edges;
  for (std::size_t t = 0; t < ep.length(); ++t) CHECK(episode_to_graph(ep, t, cfg).num_edges() == 0);

  cfg.variant = Variant::gn_segm;
  const auto spec = models::network_spec(cfg.preset, cfg.width, cfg.height);
  const auto g = episode_to_graph(ep, 1, cfg);
  CHECK(g.edges.mask.shape() == Shape{6, 1, spec.edge_height, spec.edge_width});
  CHECK_FALSE(g.nodes.pose.defined());

  cfg.variant = Variant::gn_segm_no_rgbd;
  CHECK(episode_to_graph(ep, 1, cfg).nodes.visual.shape() == Shape{3, 1, 24, 32});

  cfg.width = 64;
  CHECK_THROWS_AS(episode_to_graph(ep, 0, cfg), std::invalid_argument);
}

TEST_CASE("mask downsampling is a block maximum") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 24, w = 32, eh = 6 + trial % 3, ew = 8 + trial % 5;
    std::vector<std::uint8_t> m(h * w, 0);
    for (int dots = 0; dots < 4; ++dots) m[rng() % m.size()] = 1;
    const auto small = downsample_mask(m, h, w, eh, ew);
    for (std::size_t y = 0; y < eh; ++y) {
      for (std::size_t x = 0; x < ew; ++x) {
        // Oracle: a pixel belongs to every cell whose real-valued extent it overlaps.
        bool any = false;
        for (std::size_t yy = 0; yy < h; ++yy) {
          for (std::size_t xx = 0; xx < w; ++xx) {
            const bool in_y = double(yy + 1) > double(y) * h / eh && double(yy) < double(y + 1) * h / eh;
            const bool in_x = double(xx + 1) > double(x) * w / ew && double(xx) < double(x + 1) * w / ew;
            any = any || (in_y && in_x && m[yy * w + xx]);
          }
        }
        CHECK(small[y * ew + x] == (any ? 1.0 : 0.0));
      }
    }
  }
  CHECK_THROWS_AS(downsample_mask(std::vector<std::uint8_t>(10), 24, 32, 6, 8), std::invalid_argument);
}

TEST_CASE("batched graphs offset indices and stack attributes") {
  const auto eps = generated(2, 330);
  ModelConfig cfg;
  cfg.variant = Variant::gn_pos_vel;
  const std::vector<AttributedGraph> parts{episode_to_graph(eps[0], 0, cfg), episode_to_graph(eps[1], 1, cfg)};
  const auto b = batch_graphs(parts);
  CHECK(b.num_graphs() == 2);
  CHECK(b.num_nodes() == 6);
  CHECK(b.num_edges() == 12);
  CHECK(b.senders[6] == parts[1].senders[0] + 3);
  CHECK(b.globals.shape() == Shape{2, 6});
  CHECK(max_abs_diff(tensor::slice(b.edges.pose, 0, 6, 12), parts[1].edges.pose) == 0.0);
}

TEST_CASE("mini-batches share an object count and never hold a lone sample") {
  auto eps = generated(6, 340);
  auto five = generated(3, 350, "test5_2novel");
  eps.insert(eps.end(), five.begin(), five.end());
  Rng rng(1);
  const auto batches = make_batches(eps, 2, 4, rng);
  std::size_t covered = 0;
  for (const auto& b : batches) {
    CHECK(b.size() >= 2);
    CHECK(b.size() <= 5);
    for (const auto& s : b) CHECK(eps[s.episode].num_objects == eps[b.front().episode].num_objects);
    covered += b.size();
  }
  CHECK(covered == all_samples(eps, 2).size());
  Rng again(1);
  const auto batches2 = make_batches(eps, 2, 4, again);
  REQUIRE(batches2.size() == batches.size());
  CHECK(batches2.front().front().episode == batches.front().front().episode);

  ModelConfig cfg;
  cfg.variant = Variant::gn_segm;
  const auto batch = make_batch(eps, batches.front(), 2, cfg);
  CHECK(batch.targets.size() == 2);
  CHECK(batch.input.controls.size() == 2);
  CHECK(batch.input.controls[1].shape() == Shape{batches.front().size(), 6});
  CHECK(batch.targets[0].masks.dim(0) == batch.input.graph.num_nodes());
  CHECK(batch.targets[0].edges.dim(0) == batch.input.graph.num_edges());
}

// --- training ------------------------------------------------------------------

TEST_CASE("curriculum epoch split") {
  CHECK(stage_epochs(13, 5) == std::vector<std::size_t>{3, 3, 3, 2, 2});
  CHECK(stage_epochs(13, 1) == std::vector<std::size_t>{13});
  for (std::size_t e = 1; e <= 40; ++e) {
    for (std::size_t s = 1; s <= e; ++s) {
      const auto split = stage_epochs(e, s);
      CHECK(std::accumulate(split.begin(), split.end(), std::size_t{0}) == e);
      CHECK(split.front() - split.back() <= 1);
      CHECK(std::is_sorted(split.rbegin(), split.rend()));
    }
  }
}

TEST_CASE("train config validation and JSON round trip") {
  TrainConfig cfg;
  CHECK(cfg.epochs == 13);
  CHECK(cfg.learning_rate == 1e-3);
  CHECK(cfg.batch_size == 30);
  CHECK_NOTHROW(cfg.validate());
  cfg.horizon = 20;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.horizon = 5;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.batch_size = 12;
  cfg.model.variant = Variant::gn_segm;
  cfg.model.feedback = models::Feedback::reencode;
  cfg.seed = 77;
  cfg.train_data = "/data/train3";

  TrainConfig back;
  merge_json(back, to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  merge_json(back, R"({"epochs": 4})");
  CHECK(back.epochs == 4);
  CHECK(back.seed == 77);
  CHECK_THROWS_AS(merge_json(back, R"({"epoch": 4})"), std::invalid_argument);
  CHECK_THROWS_AS(merge_json(back, R"({"epochs": "four"})"), std::invalid_argument);
  CHECK_THROWS_AS(merge_json(back, "not json"), std::invalid_argument);
}

TEST_CASE("training is deterministic given config and seed") {
  const auto eps = generated(4, 360);
  auto cfg = tiny_config(Variant::baseline, 1);
  cfg.epochs = 2;
  cfg.max_steps = 6;
  const auto a = train(cfg, eps);
  const auto b = train(cfg, eps);
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    CHECK(std::abs(a.epochs[i].mean_loss - b.epochs[i].mean_loss) <= 1e-6);
    CHECK(std::isfinite(a.epochs[i].mean_loss));
  }
  cfg.seed = 6;
  const auto c = train(cfg, eps);
  CHECK(c.epochs.front().mean_loss != a.epochs.front().mean_loss);
}

TEST_CASE("horizon 5 runs five curriculum stages and writes a checkpoint per stage") {
  const auto dir = scratch("curriculum");
  const auto eps = generated(3, 370);
  auto cfg = tiny_config(Variant::gn_pos_vel, 5);
  cfg.epochs = 13;
  cfg.max_steps = 5;
  cfg.out_dir = dir;
  std::ostringstream log;
  const auto r = train(cfg, eps, &log);
  for (std::size_t k = 1; k <= 5; ++k) {
    CHECK(log.str().find("stage " + std::to_string(k) + "/5") != std::string::npos);
    CHECK(fs::exists(stage_checkpoint_path(dir, k)));
  }
  CHECK(r.stage_checkpoints.size() == 5);
  CHECK(fs::exists(dir / final_checkpoint_name));
  CHECK(r.checkpoint.stage == 5);
  const auto ck3 = models::read_checkpoint(stage_checkpoint_path(dir, 3));
  CHECK(ck3.stage == 3);
  CHECK(ck3.horizon == 3);
}

TEST_CASE("stage checkpoints of every variant load into the next stage") {
  const auto eps = generated(3, 380);
  for (const auto v : models::all_variants()) {
    CAPTURE(models::variant_name(v));
    const auto dir = scratch(std::string("resume_") + std::string(models::variant_name(v)));
    auto cfg = tiny_config(v, 2);
    cfg.out_dir = dir;
    train(cfg, eps);
    fs::remove(stage_checkpoint_path(dir, 2));
    fs::remove(dir / final_checkpoint_name);

    const auto ck1 = models::read_checkpoint(stage_checkpoint_path(dir, 1));
    const auto model = load_predictor(ck1);
    CHECK(rollout(*model, eps[0], 0, 2).size() == 2);

    cfg.resume = true;
    std::ostringstream log;
    const auto r = train(cfg, eps, &log);
    CHECK(log.str().find("resuming after stage 1/2") != std::string::npos);
    REQUIRE_FALSE(r.epochs.empty());
    for (const auto& e : r.epochs) CHECK(e.stage == 2);
    CHECK(fs::exists(stage_checkpoint_path(dir, 2)));
  }
}

TEST_CASE("a non-finite loss aborts with the step location") {
  auto eps = generated(3, 390);
  for (auto& v : eps[1].steps[0].rgb) v = std::numeric_limits<float>::quiet_NaN();
  for (auto& v : eps[1].steps[1].rgb) v = std::numeric_limits<float>::quiet_NaN();
  auto cfg = tiny_config(Variant::baseline, 1);
  cfg.epochs = 3;
  cfg.max_steps = 0;
  try {
    train(cfg, eps);
    FAIL("expected a numerical failure");
  } catch (const NumericalFailure& e) {
    CHECK(std::string(e.what()).find("stage 1 epoch") != std::string::npos);
  }
}

// --- rollout -------------------------------------------------------------------

TEST_CASE("one-step rollout equals the single-step forward pass") {
  const auto ep = generated(1, 400).front();
  ModelConfig cfg;
  cfg.variant = Variant::ap;
  Rng rng(2);
  auto model = models::make_predictor(cfg, rng);
  const auto masks = rollout(*model, ep, 2, 1);
  models::ModelInput in;
  in.graph = episode_to_graph(ep, 2, cfg);
  in.controls = {control(ep, 2)};
  const auto direct = model->forward(in, tensor::Mode::eval);
  CHECK(max_abs_diff(masks[0], direct[0].masks) == 0.0);
  CHECK_THROWS_AS(rollout(*model, ep, ep.length() - 2, 2), std::out_of_range);
}

TEST_CASE("re-encoding the predicted masks changes multi-step rollouts") {
  const auto ep = generated(1, 401).front();
  ModelConfig latent_cfg, pixel_cfg;
  latent_cfg.variant = pixel_cfg.variant = Variant::ap;
  latent_cfg.feedback = models::Feedback::latent;
  pixel_cfg.feedback = models::Feedback::reencode;
  Rng r1(4), r2(4);
  auto latent = models::make_predictor(latent_cfg, r1);
  auto pixel = models::make_predictor(pixel_cfg, r2);
  // Nonzero update rule so the carried latent differs from a re-encoding.
  for (auto& p : latent->parameters()) {
    for (auto& v : p.tensor.values()) v += real(0.01);
  }
  for (auto& p : pixel->parameters()) {
    for (auto& v : p.tensor.values()) v += real(0.01);
  }
  const auto a = rollout(*latent, ep, 0, 3), b = rollout(*pixel, ep, 0, 3);
  CHECK(max_abs_diff(a[0], b[0]) == 0.0);
  CHECK(max_abs_diff(a[2], b[2]) > 1e-6);
}

TEST_CASE("five-step rollout of a pinned episode and model matches its golden masks") {
  const auto ep = sim::read_episode(fs::path(ODYN_GOLDEN_DIR) / "train3_43.odyn");
  ModelConfig cfg;
  cfg.variant = Variant::ap;
  Rng rng(11);
  auto model = models::make_predictor(cfg, rng);
  std::mt19937_64 r(12);
  for (auto& p : model->parameters()) {
    for (auto& v : p.tensor.values()) v += real(0.02) * real(int(r() % 201) - 100) / real(100);
  }
  const auto masks = rollout(*model, ep, 1, 5);
  const fs::path golden = fs::path(ODYN_GOLDEN_DIR) / "rollout_ap_train3_43.txt";
  if (std::getenv("ODYN_REGENERATE_GOLDEN")) {
    std::ofstream out(golden);
    out.precision(9);
    for (const auto& m : masks) {
      for (std::size_t i = 0; i < m.size(); ++i) out << double(m.at(i)) << '\n';
    }
  }
  std::ifstream in(golden);
  REQUIRE(in);
  double worst = 0;
  std::size_t count = 0;
  for (const auto& m : masks) {
    for (std::size_t i = 0; i < m.size(); ++i, ++count) {
      double g = 0;
      REQUIRE(static_cast<bool>(in >> g));
      worst = std::max(worst, std::abs(g - double(m.at(i))));
    }
  }
  CHECK(count == 5 * 3 * 24 * 32);
  CHECK(worst < 1e-6);
}

// --- reports -------------------------------------------------------------------

TEST_CASE("report files round trip and reject damage") {
  const auto dir = scratch("report");
  std::vector<EvalReport> rs(2);
  rs[0] = {"test3", "ap", 1, 5, EvalMode::sliding, 0.8123456789012345, 300, {0.81}, {{3, 0.81}}};
  rs[1] = {"test5_5novel", "baseline", 5, 6, EvalMode::sliding, 0.25, 1200, {0.3, 0.2}, {}};
  write_report_csv(rs, dir / "r.csv");
  const auto back = read_report_csv(dir / "r.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].mean_iou == rs[0].mean_iou);
  CHECK(back[1].variant == "baseline");
  CHECK(back[1].seed == 6);
  CHECK(report_table(rs).find("test5_5novel") != std::string::npos);

  {
    std::ofstream bad(dir / "bad.csv");
    bad << report_csv_header << "\ntest3,ap,1,zero,300,5\n";
  }
  CHECK_THROWS_AS(read_report_csv(dir / "bad.csv"), sim::IoError);
  {
    std::ofstream bad(dir / "bad.csv");
    bad << "dataset,variant\n";
  }
  CHECK_THROWS_AS(read_report_csv(dir / "bad.csv"), sim::IoError);
  rs[0].dataset = "a,b";
  CHECK_THROWS_AS(report_csv_row(rs[0]), std::invalid_argument);
}

TEST_CASE("datasets load from their manifest") {
  const auto dir = scratch("dataset");
  sim::generate_dataset(sim::role_config("test3"), "test3", 3, 20, dir, 2);
  const auto eps = load_dataset(dir, 3);
  REQUIRE(eps.size() == 3);
  CHECK(eps[1] == sim::generate_episode(sim::role_config("test3"), 21));
  CHECK_THROWS_AS(load_dataset(dir / "missing"), sim::IoError);
}
