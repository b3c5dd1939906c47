#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "odyn/cli.hpp"
#include "odyn/sim.hpp"

namespace odyn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Writes to two streams at once: the console and a log file.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == EOF) return !EOF;
    const int ra = a_->sputc(static_cast<char>(c)), rb = b_->sputc(static_cast<char>(c));
    return ra == EOF || rb == EOF ? EOF : c;
  }
  int sync() override { return a_->pubsync() == 0 && b_->pubsync() == 0 ? 0 : -1; }

 private:
  std::streambuf *a_, *b_;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sim::IoError(path.string() + ": cannot open");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Starts a run record; finish() completes it with the exit code.
class RunRecord {
 public:
  RunRecord(std::string command, std::span<const std::string> args, fs::path path) : path_(std::move(path)) {
    m_.command = std::move(command);
    m_.args.assign(args.begin(), args.end());
    m_.build = build_id();
  }
  RunRecord(const RunRecord&) = delete;
  RunRecord& operator=(const RunRecord&) = delete;
  // A run that threw keeps a null exit code but records when it stopped.
  ~RunRecord() {
    if (m_.started.empty() || !m_.finished.empty()) return;
    try {
      m_.finished = iso_timestamp(std::chrono::system_clock::now());
      write_run_manifest(m_, path_);
    } catch (...) {
    }
  }
  RunManifest& manifest() { return m_; }
  void start() {
    m_.started = iso_timestamp(std::chrono::system_clock::now());
    write_run_manifest(m_, path_);
  }
  void finish(int code) {
    m_.finished = iso_timestamp(std::chrono::system_clock::now());
    m_.exit_code = code;
    write_run_manifest(m_, path_);
  }

 private:
  fs::path path_;
  RunManifest m_;
};

const sim::Manifest& require_dataset_frames(const sim::Manifest& m, const fs::path& where, std::size_t width,
                                            std::size_t height, std::size_t horizon) {
  if (m.episodes.empty()) throw DataError(where.string() + ": the dataset holds no episodes");
  bool long_enough = false;
  for (const auto& e : m.episodes) {
    if (e.width != width || e.height != height) {
      throw DataError(where.string() + ": episode " + e.file + " is " + std::to_string(e.width) + "x" +
                      std::to_string(e.height) + " but the model expects " + std::to_string(width) + "x" +
                      std::to_string(height));
    }
    long_enough = long_enough || e.length > horizon;
  }
  if (!long_enough) {
    throw DataError(where.string() + ": no episode is longer than the horizon " + std::to_string(horizon));
  }
  return m;
}

// --- datagen ---------------------------------------------------------------

struct DatagenFlags {
  std::string role;
  std::size_t count = 0;  // 0: the role's default size
  std::uint64_t seed = 0;
  std::string out;
  std::size_t width = 32, height = 24;
};

int cmd_datagen(const DatagenFlags& f, std::span<const std::string> args, std::ostream& out) {
  const auto& roles = sim::role_names();
  if (std::find(roles.begin(), roles.end(), f.role) == roles.end()) {
    throw std::invalid_argument("unknown role '" + f.role + "'");
  }
  // Desk defaults: 200 training episodes, 50 per test role.
  const std::size_t count = f.count ? f.count : (f.role.rfind("train", 0) == 0 ? 200 : 50);
  const auto cfg = sim::role_config(f.role, f.width, f.height);
  RunRecord record("datagen", args, fs::path(f.out) / run_manifest_name);
  json resolved = {{"role", f.role}, {"count", count}, {"seed", f.seed}, {"out", f.out},
                   {"width", f.width}, {"height", f.height}};
  record.manifest().config_json = resolved.dump();
  record.manifest().seed = f.seed;
  record.start();
  const auto m = sim::generate_dataset(cfg, f.role, count, f.seed, f.out, thread_count());
  record.manifest().outputs.push_back((fs::path(f.out) / sim::manifest_file_name).string());
  for (const auto& e : m.episodes) record.manifest().outputs.push_back((fs::path(f.out) / e.file).string());
  out << "wrote " << m.episodes.size() << " " << f.role << " episodes (" << m.total_steps() << " steps) to "
      << f.out << "\n";
  record.finish(ok);
  return ok;
}

// --- train -----------------------------------------------------------------

struct TrainFlags {
  std::string config, data, out, variant, preset, feedback;
  std::size_t horizon = 0, epochs = 0, batch = 0, max_steps = 0, width = 0, height = 0, memorization_steps = 0;
  double lr = 0, latent_weight = 0;
  std::uint64_t seed = 0;
  bool no_curriculum = false, sum_components = false, resume = false;
};

int cmd_train(const CLI::App& sub, const TrainFlags& f, std::span<const std::string> args, std::ostream& out) {
  // Precedence: built-in defaults < config file < flags.
  pipeline::TrainConfig cfg;
  bool size_given = false;
  if (!f.config.empty()) {
    const std::string text = read_text(f.config);
    pipeline::merge_json(cfg, text);
    const json j = json::parse(text);
    size_given = j.contains("width") || j.contains("height");
  }
  auto given = [&](const char* name) { return sub.count(name) > 0; };
  if (given("--data")) cfg.train_data = f.data;
  if (given("--out")) cfg.out_dir = f.out;
  if (given("--variant")) cfg.model.variant = models::parse_variant(f.variant);
  if (given("--preset")) cfg.model.preset = models::parse_preset(f.preset);
  if (given("--feedback")) {
    if (f.feedback == "latent") cfg.model.feedback = models::Feedback::latent;
    else if (f.feedback == "reencode") cfg.model.feedback = models::Feedback::reencode;
    else cfg.model.feedback.reset();
  }
  if (given("--horizon")) cfg.horizon = f.horizon;
  if (given("--epochs")) cfg.epochs = f.epochs;
  if (given("--lr")) cfg.learning_rate = f.lr;
  if (given("--batch")) cfg.batch_size = f.batch;
  if (given("--seed")) cfg.seed = f.seed;
  if (given("--no-curriculum")) cfg.curriculum = false;
  if (given("--latent-weight")) cfg.latent_weight = f.latent_weight;
  if (given("--sum-components")) cfg.sum_components = true;
  if (given("--max-steps")) cfg.max_steps = f.max_steps;
  if (given("--memorization-steps")) cfg.memorization.max_steps = f.memorization_steps;
  if (given("--resume")) cfg.resume = true;
  if (given("--width")) cfg.model.width = f.width, size_given = true;
  if (given("--height")) cfg.model.height = f.height, size_given = true;
  if (cfg.train_data.empty()) throw std::invalid_argument("train: no dataset (--data or config train_data)");
  if (cfg.out_dir.empty()) throw std::invalid_argument("train: no output directory (--out or config out_dir)");

  const auto manifest = sim::read_manifest(cfg.train_data);
  // Frame size follows the dataset unless stated explicitly.
  if (!size_given && !manifest.episodes.empty()) {
    cfg.model.width = manifest.episodes.front().width;
    cfg.model.height = manifest.episodes.front().height;
  }
  cfg.validate();
  models::network_spec(cfg.model.preset, cfg.model.width, cfg.model.height);
  require_dataset_frames(manifest, cfg.train_data, cfg.model.width, cfg.model.height, cfg.horizon);

  fs::create_directories(cfg.out_dir);
  RunRecord record("train", args, cfg.out_dir / run_manifest_name);
  record.manifest().config_json = pipeline::to_json(cfg);
  record.manifest().seed = cfg.seed;
  record.start();

  std::ofstream log_file(cfg.out_dir / "train.log", std::ios::trunc);
  TeeBuf tee(out.rdbuf(), log_file.rdbuf());
  std::ostream log(&tee);
  log << "build " << build_id() << "\nconfig " << json::parse(pipeline::to_json(cfg)).dump() << "\n";
  const auto result = pipeline::train(cfg, &log, thread_count());
  log << "wrote " << (cfg.out_dir / pipeline::final_checkpoint_name).string() << "\n";
  log.flush();

  for (const auto& p : result.stage_checkpoints) record.manifest().outputs.push_back(p.string());
  record.manifest().outputs.push_back((cfg.out_dir / pipeline::final_checkpoint_name).string());
  record.manifest().outputs.push_back((cfg.out_dir / "train.log").string());
  record.finish(ok);
  return ok;
}

// --- eval ------------------------------------------------------------------

struct EvalFlags {
  std::string checkpoint, out, mode = "sliding";
  std::vector<std::string> data;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
  bool oracle = false;
};

std::string dataset_label(const sim::Manifest& m, const fs::path& path) {
  if (!m.dataset.empty()) return m.dataset;
  return sim::manifest_directory(path).filename().string();
}

int cmd_eval(const CLI::App& sub, const EvalFlags& f, std::span<const std::string> args, std::ostream& out) {
  if (f.oracle == !f.checkpoint.empty()) throw std::invalid_argument("eval: give exactly one of --checkpoint, --oracle");
  if (f.mode != "sliding" && f.mode != "single") throw std::invalid_argument("eval: --mode must be sliding or single");
  const auto mode = f.mode == "single" ? pipeline::EvalMode::single : pipeline::EvalMode::sliding;

  std::optional<models::Checkpoint> ckpt;
  std::size_t horizon = f.horizon ? f.horizon : 1;
  std::uint64_t seed = f.seed;
  if (!f.oracle) {
    ckpt = models::read_checkpoint(f.checkpoint);
    if (!f.horizon) horizon = ckpt->horizon;
    if (!sub.count("--seed") && !ckpt->train_config.empty()) {
      const json j = json::parse(ckpt->train_config, nullptr, false);
      if (j.is_object() && j.contains("seed") && j["seed"].is_number_unsigned()) seed = j["seed"].get<std::uint64_t>();
    }
  }

  std::vector<sim::Manifest> manifests;
  for (const auto& d : f.data) {
    manifests.push_back(sim::read_manifest(d));
    if (ckpt) require_dataset_frames(manifests.back(), d, ckpt->model.width, ckpt->model.height, horizon);
  }

  fs::create_directories(f.out);
  RunRecord record("eval", args, fs::path(f.out) / run_manifest_name);
  json resolved = {{"checkpoint", f.checkpoint}, {"oracle", f.oracle}, {"data", f.data}, {"horizon", horizon},
                   {"mode", f.mode}, {"seed", seed}, {"out", f.out}};
  record.manifest().config_json = resolved.dump();
  record.manifest().seed = seed;
  record.start();

  const unsigned threads = thread_count();
  std::vector<pipeline::EvalReport> reports;
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    const auto episodes = pipeline::load_dataset(f.data[i], threads);
    pipeline::EvalReport r = ckpt ? pipeline::evaluate(*ckpt, episodes, horizon, mode, threads)
                                  : pipeline::evaluate(oracle_rollout(), episodes, horizon, mode, threads);
    if (!ckpt) r.variant = "oracle";
    r.dataset = dataset_label(manifests[i], f.data[i]);
    r.seed = seed;
    reports.push_back(std::move(r));
  }
  const fs::path csv = fs::path(f.out) / "report.csv", table = fs::path(f.out) / "report.txt";
  pipeline::write_report_csv(reports, csv);
  const std::string text = pipeline::report_table(reports);
  {
    std::ofstream t(table, std::ios::trunc);
    t << text;
    if (!t) throw sim::IoError(table.string() + ": cannot write");
  }
  out << text;
  record.manifest().outputs = {csv.string(), table.string()};
  record.finish(ok);
  return ok;
}

// --- plot ------------------------------------------------------------------

struct PlotFlags {
  std::vector<std::string> reports;
  std::string out;
};

int cmd_plot(const PlotFlags& f, std::span<const std::string> args, std::ostream& out) {
  std::vector<pipeline::EvalReport> rows;
  for (const auto& p : f.reports) {
    auto more = pipeline::read_report_csv(p);
    rows.insert(rows.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  if (rows.empty()) throw DataError("plot: the report files hold no rows; no chart written");
  const fs::path chart(f.out);
  fs::path merged = chart;
  merged.replace_extension(".csv");
  if (merged == chart) merged += ".merged.csv";
  fs::path table = chart;
  table.replace_extension(".txt");

  RunRecord record("plot", args, fs::path(chart.string() + ".run.json"));
  record.manifest().config_json = json({{"reports", f.reports}, {"out", f.out}}).dump();
  record.start();
  write_bar_chart(rows, chart);
  pipeline::write_report_csv(rows, merged);
  const std::string text = pipeline::report_table(rows);
  {
    std::ofstream t(table, std::ios::trunc);
    t << text;
    if (!t) throw sim::IoError(table.string() + ": cannot write");
  }
  out << text << "wrote " << chart.string() << " (" << rows.size() << " bars)\n";
  record.manifest().outputs = {chart.string(), merged.string(), table.string()};
  record.finish(ok);
  return ok;
}

}  // namespace

pipeline::RolloutFn oracle_rollout() {
  return [](const sim::Episode& ep, std::size_t start, std::size_t n) {
    if (start + n >= ep.length()) throw std::out_of_range("oracle rollout runs past the episode");
    std::vector<tensor::Tensor> out;
    for (std::size_t k = 1; k <= n; ++k) out.push_back(pipeline::object_masks(ep, start + k));
    return out;
  };
}

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Object dynamics prediction from segmented frames: data, training, evaluation, charts", "odyn"};
  app.require_subcommand(1);
  app.set_version_flag("--version", build_id());

  DatagenFlags dg;
  auto* datagen = app.add_subcommand("datagen", "Generate a dataset for one of the named roles");
  datagen->add_option("--role", dg.role, "train3, test3, test5_2novel or test5_5novel")->required();
  datagen->add_option("--count", dg.count, "Episodes (default 200 for train roles, 50 otherwise)");
  datagen->add_option("--seed", dg.seed, "Base seed; episode i uses seed + i")->capture_default_str();
  datagen->add_option("--out", dg.out, "Output directory")->required();
  datagen->add_option("--width", dg.width, "Frame width")->capture_default_str();
  datagen->add_option("--height", dg.height, "Frame height")->capture_default_str();

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train a predictor with the curriculum schedule");
  train->add_option("--config", tf.config, "JSON training configuration; flags override it");
  train->add_option("--data", tf.data, "Training dataset directory or manifest");
  train->add_option("--out", tf.out, "Output directory for checkpoints and logs");
  train->add_option("--variant", tf.variant, "gn_pos_vel, gn_segm, gn_segm_no_rgbd, gn_no_edges, ap, ap_no_interact, baseline");
  train->add_option("--horizon", tf.horizon, "Prediction horizon n (default 1)");
  train->add_option("--epochs", tf.epochs, "Total epochs (default 13)");
  train->add_option("--lr", tf.lr, "Adam learning rate (default 0.001)");
  train->add_option("--batch", tf.batch, "Mini-batch size (default 30)");
  train->add_option("--preset", tf.preset, "desk or paper (default desk)");
  train->add_option("--seed", tf.seed, "Run seed (default 0)");
  train->add_flag("--no-curriculum", tf.no_curriculum, "Train the full horizon in a single stage");
  train->add_option("--latent-weight", tf.latent_weight, "Weight of the latent loss (default 1)");
  train->add_flag("--sum-components", tf.sum_components, "Sum squared pose errors over components");
  train->add_option("--max-steps", tf.max_steps, "Cap on optimizer steps (0: none)");
  train->add_option("--memorization-steps", tf.memorization_steps, "Latent-target auto-encoder step budget");
  train->add_option("--feedback", tf.feedback, "Multi-step carry: default, latent or reencode");
  train->add_flag("--resume", tf.resume, "Continue after the last stage checkpoint in --out");
  train->add_option("--width", tf.width, "Frame width (default: the dataset's)");
  train->add_option("--height", tf.height, "Frame height (default: the dataset's)");

  EvalFlags ef;
  auto* eval = app.add_subcommand("eval", "Mean IoU of rolled-out predictions");
  eval->add_option("--checkpoint", ef.checkpoint, "Trained model");
  eval->add_flag("--oracle", ef.oracle, "Score the ground truth itself (sanity check)");
  eval->add_option("--data", ef.data, "Dataset directories or manifests")->required()->expected(1, -1);
  eval->add_option("--horizon", ef.horizon, "Rollout steps (default: the checkpoint's)");
  eval->add_option("--mode", ef.mode, "sliding (every start step) or single (first step only)")->capture_default_str();
  eval->add_option("--seed", ef.seed, "Seed recorded in the report (default: the training seed)");
  eval->add_option("--out", ef.out, "Output directory for report.csv and report.txt")->required();

  PlotFlags pf;
  auto* plot = app.add_subcommand("plot", "Grouped bar chart of report files");
  plot->add_option("--reports", pf.reports, "Report CSV files")->required()->expected(1, -1);
  plot->add_option("--out", pf.out, "Chart path (.svg)")->required();

  std::string rerun_manifest, rerun_out;
  auto* rerun = app.add_subcommand("rerun", "Repeat the command recorded in a run manifest");
  rerun->add_option("--manifest", rerun_manifest, "run_manifest.json of an earlier run")->required();
  rerun->add_option("--out", rerun_out, "Replacement output location");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    // Help and version requests arrive as parse errors with exit code 0.
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return ok;
    }
    err << "odyn: " << e.what() << "\n" << "run 'odyn --help' for usage\n";
    return usage_error;
  }

  try {
    if (*datagen) return cmd_datagen(dg, args, out);
    if (*train) return cmd_train(*train, tf, args, out);
    if (*eval) return cmd_eval(*eval, ef, args, out);
    if (*plot) return cmd_plot(pf, args, out);
    if (*rerun) {
      const auto m = read_run_manifest(rerun_manifest);
      const auto again = rerun_args(m, rerun_out);
      out << "rerunning " << m.command << " (recorded by build " << m.build << ")\n";
      return run(again, out, err);
    }
  } catch (const DataError& e) {
    err << "odyn: data error: " << e.what() << "\n";
    return data_error;
  } catch (const sim::IoError& e) {
    err << "odyn: data error: " << e.what() << "\n";
    return data_error;
  } catch (const sim::SimError& e) {
    err << "odyn: data error: " << e.what() << "\n";
    return data_error;
  } catch (const tensor::ShapeError& e) {
    err << "odyn: data error: " << e.what() << "\n";
    return data_error;
  } catch (const pipeline::NumericalFailure& e) {
    err << "odyn: numerical failure: " << e.what() << "\n";
    return numerical_failure;
  } catch (const tensor::NumericError& e) {
    err << "odyn: numerical failure: " << e.what() << "\n";
    return numerical_failure;
  } catch (const std::invalid_argument& e) {
    err << "odyn: " << e.what() << "\n";
    return usage_error;
  } catch (const std::out_of_range& e) {
    err << "odyn: " << e.what() << "\n";
    return usage_error;
  } catch (const fs::filesystem_error& e) {
    err << "odyn: data error: " << e.what() << "\n";
    return data_error;
  }
  return usage_error;
}

}  // namespace odyn::cli
