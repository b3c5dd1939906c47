#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

#include "odyn/pipeline.hpp"

namespace odyn::pipeline {

namespace fs = std::filesystem;

double iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) {
    throw tensor::ShapeError("iou: masks of " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                             " pixels");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > 1 || b[i] > 1) throw std::invalid_argument("iou: mask values must be 0 or 1");
    inter += a[i] & b[i];
    uni += a[i] | b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

// Runs work(i) for i in [0, count) on up to `threads` workers. The first
// exception is rethrown after every worker has stopped.
template <typename Work>
void parallel_for(std::size_t count, unsigned threads, Work work) {
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (n <= 1) {
    for (std::size_t i = 0; i < count; ++i) work(i, 0u);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < n; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = next++; i < count && !failed; i = next++) {
        try {
          work(i, w);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct Item {
  std::size_t step;  // rollout step, 1-based
  double iou;
};

std::vector<std::size_t> start_steps(const sim::Episode& ep, std::size_t horizon, EvalMode mode) {
  std::vector<std::size_t> out;
  if (ep.length() <= horizon) return out;
  const std::size_t last = mode == EvalMode::single ? 0 : ep.length() - 1 - horizon;
  for (std::size_t s = 0; s <= last; ++s) out.push_back(s);
  return out;
}

std::vector<Item> score_episode(const RolloutFn& model, const sim::Episode& ep, std::size_t horizon, EvalMode mode) {
  std::vector<Item> items;
  const std::size_t n = ep.num_objects, hw = ep.pixels();
  std::vector<std::uint8_t> rounded(hw);
  for (std::size_t start : start_steps(ep, horizon, mode)) {
    const auto preds = model(ep, start, horizon);
    if (preds.size() != horizon) {
      throw tensor::ShapeError("evaluate: model returned " + std::to_string(preds.size()) + " steps for horizon " +
                               std::to_string(horizon));
    }
    for (std::size_t k = 1; k <= horizon; ++k) {
      const Tensor& p = preds[k - 1];
      if (p.shape() != Shape{n, 1, ep.height, ep.width}) {
        throw tensor::ShapeError("evaluate: predicted masks " + tensor::to_string(p.shape()) + " for " +
                                 std::to_string(n) + " objects of " + std::to_string(ep.width) + "x" +
                                 std::to_string(ep.height));
      }
      const auto values = p.values();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t q = 0; q < hw; ++q) rounded[q] = values[i * hw + q] >= real(0.5) ? 1 : 0;
        items.push_back({k, iou(ep.mask(start + k, i), rounded)});
      }
    }
  }
  return items;
}

}  // namespace

EvalReport evaluate(const RolloutFn& model, std::span<const sim::Episode> episodes, std::size_t horizon,
                    EvalMode mode, unsigned threads) {
  if (episodes.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (horizon == 0) throw std::invalid_argument("evaluate: horizon must be at least 1");
  std::vector<std::vector<Item>> per_episode(episodes.size());
  parallel_for(episodes.size(), threads,
               [&](std::size_t e, unsigned) { per_episode[e] = score_episode(model, episodes[e], horizon, mode); });

  // Merged in episode order so the sums do not depend on the worker count.
  EvalReport r;
  r.horizon = horizon;
  r.mode = mode;
  double total = 0;
  std::vector<double> step_sum(horizon, 0.0);
  std::vector<std::size_t> step_count(horizon, 0);
  std::map<std::size_t, std::pair<double, std::size_t>> by_count;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    auto& bucket = by_count[episodes[e].num_objects];
    for (const auto& item : per_episode[e]) {
      total += item.iou;
      ++r.n_items;
      step_sum[item.step - 1] += item.iou;
      ++step_count[item.step - 1];
      bucket.first += item.iou;
      ++bucket.second;
    }
  }
  if (r.n_items == 0) {
    throw std::invalid_argument("evaluate: no episode is longer than the horizon " + std::to_string(horizon));
  }
  r.mean_iou = total / static_cast<double>(r.n_items);
  for (std::size_t k = 0; k < horizon; ++k) {
    r.per_step_iou.push_back(step_count[k] ? step_sum[k] / static_cast<double>(step_count[k]) : 0.0);
  }
  for (const auto& [count, acc] : by_count) {
    if (acc.second) r.per_object_count.emplace_back(count, acc.first / static_cast<double>(acc.second));
  }
  return r;
}

EvalReport evaluate(const models::Checkpoint& ckpt, std::span<const sim::Episode> episodes, std::size_t horizon,
                    EvalMode mode, unsigned threads) {
  // One predictor per worker: forward passes keep per-call state.
  const unsigned workers = std::max(1u, threads);
  std::vector<std::unique_ptr<models::Predictor>> models;
  for (unsigned w = 0; w < workers; ++w) models.push_back(load_predictor(ckpt));
  std::vector<std::thread::id> owners(workers);
  std::mutex owners_mutex;
  RolloutFn fn = [&](const sim::Episode& ep, std::size_t start, std::size_t n) {
    std::size_t slot = 0;
    {
      std::lock_guard lock(owners_mutex);
      const auto me = std::this_thread::get_id();
      auto it = std::find(owners.begin(), owners.end(), me);
      if (it == owners.end()) it = std::find(owners.begin(), owners.end(), std::thread::id{});
      *it = me;
      slot = static_cast<std::size_t>(it - owners.begin());
    }
    return rollout(*models[slot], ep, start, n);
  };
  auto r = evaluate(fn, episodes, horizon, mode, workers);
  r.variant = std::string(models::variant_name(ckpt.model.variant));
  return r;
}

std::vector<sim::Episode> load_dataset(const fs::path& dir_or_manifest, unsigned threads) {
  const auto manifest = sim::read_manifest(dir_or_manifest);
  const auto dir = sim::manifest_directory(dir_or_manifest);
  if (manifest.episodes.empty()) throw sim::IoError(dir.string() + ": the manifest lists no episodes");
  std::vector<sim::Episode> out(manifest.episodes.size());
  parallel_for(out.size(), threads, [&](std::size_t i, unsigned) {
    const auto& entry = manifest.episodes[i];
    auto ep = sim::read_episode(dir / entry.file);
    if (ep.length() != entry.length || ep.num_objects != entry.num_objects || ep.width != entry.width ||
        ep.height != entry.height) {
      throw sim::IoError((dir / entry.file).string() + ": does not match its manifest entry");
    }
    out[i] = std::move(ep);
  });
  return out;
}

}  // namespace odyn::pipeline
