// Copyright 2026 The curatune Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curatune/core/random.hpp"
#include "curatune/qtune/backbone.hpp"

namespace curatune::qtune {

/// Nested, seed-deterministic subsets: subset k is the first sizes[k] entries
/// of one seeded permutation, so smaller subsets are contained in larger ones.
/// Returns indices into the dataset, each subset sorted ascending.
inline std::vector<std::vector<std::size_t>> make_ablation_subsets(std::size_t dataset_size,
                                                                   std::span<const int> sizes, std::uint64_t seed) {
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 0) throw ConfigError("subset sizes must be nonnegative");
    if (i > 0 && sizes[i] < sizes[i - 1]) throw ConfigError("subset sizes must be ascending");
  }
  if (!sizes.empty() && static_cast<std::size_t>(sizes.back()) > dataset_size)
    throw DataError("subset size " + std::to_string(sizes.back()) + " exceeds dataset size " +
                    std::to_string(dataset_size));
  const auto perm = seeded_permutation(dataset_size, seed, 0x5B5E7);
  std::vector<std::vector<std::size_t>> out;
  for (int k : sizes) {
    std::vector<std::size_t> s(perm.begin(), perm.begin() + k);
    std::sort(s.begin(), s.end());
    out.push_back(std::move(s));
  }
  return out;
}

struct EarlyStopDecision {
  bool stop = false;
  std::string reason;  // "cap" | "patience" | ""
};

/// `proxy_history` holds one validation-proxy value per eval, in step order
/// (lower is better; +inf marks an eval flagged by the drift guard).
inline EarlyStopDecision check_early_stop(std::int64_t step, std::span<const double> proxy_history,
                                          const QTuneConfig& config) {
  if (step >= config.max_iterations) return {true, "cap"};
  if (config.early_stop_patience > 0 && !proxy_history.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < proxy_history.size(); ++i)
      if (proxy_history[i] < proxy_history[best]) best = i;
    const std::size_t since_best = proxy_history.size() - 1 - best;
    if (since_best >= static_cast<std::size_t>(config.early_stop_patience)) return {true, "patience"};
  }
  return {false, ""};
}

struct EvalPoint {
  std::int64_t step = 0;
  double validation_loss = 0.0;
  std::optional<double> statistic;
  double proxy = 0.0;
};

struct StepRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double noise_offset = 0.0;
};

struct QTuneReport {
  int steps_run = 0;
  std::string stop_reason;
  int subset_size = 0;
  int train_size = 0;
  int holdout_size = 0;
  std::vector<StepRecord> loss_curve;
  std::vector<EvalPoint> evals;
  QTuneConfig config;
};

inline void to_json(nlohmann::json& j, const EvalPoint& e) {
  j = {{"step", e.step}, {"validation_loss", e.validation_loss}};
  if (e.statistic) j["statistic"] = *e.statistic;
}

inline void to_json(nlohmann::json& j, const QTuneReport& r) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& s : r.loss_curve) curve.push_back({{"step", s.step}, {"loss", s.loss}, {"noise_offset", s.noise_offset}});
  j = {{"steps_run", r.steps_run},     {"stop_reason", r.stop_reason}, {"subset_size", r.subset_size},
       {"train_size", r.train_size},   {"holdout_size", r.holdout_size}, {"loss_curve", std::move(curve)},
       {"evals", r.evals},             {"config", r.config}};
}

struct QTuneHooks {
  /// Called every grid_every steps (and never when it is 0).
  std::function<void(std::int64_t step, QTuneBackbone&)> on_grid;
  std::function<void(const StepRecord&)> on_step;
};

/// Quality-tunes `backbone` on `quality_set` under `config`.
inline QTuneReport quality_tune(QTuneBackbone& backbone, std::span<const QualityExample> quality_set,
                                const QTuneConfig& config, const QTuneHooks& hooks = {}) {
  config.validate();
  if (quality_set.empty()) throw DataError("quality_tune: empty quality set");
  if (!backbone.ready())
    throw StateError("backbone conformance failure: backbone is not loaded from a pre-trained checkpoint");

  // Optional ablation subset, then a held-out slice for the validation proxy.
  std::vector<std::size_t> pool;
  if (config.subset_size) {
    if (static_cast<std::size_t>(*config.subset_size) > quality_set.size())
      throw ConfigError("subset_size " + std::to_string(*config.subset_size) + " exceeds quality set size " +
                        std::to_string(quality_set.size()));
    const int sz[1] = {*config.subset_size};
    pool = make_ablation_subsets(quality_set.size(), sz, config.seed).front();
  } else {
    pool.resize(quality_set.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  }
  const auto order = seeded_permutation(pool.size(), config.seed, 0x401D);
  std::size_t n_hold = 0;
  if (pool.size() >= 20 && config.holdout_fraction > 0.0)
    n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.holdout_fraction * pool.size())));
  std::vector<QualityExample> train, holdout;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < order.size() - n_hold ? train : holdout).push_back(quality_set[pool[order[i]]]);
  // Tiny sets validate on (a slice of) the training data itself.
  std::span<const QualityExample> val(holdout.empty() ? std::span<const QualityExample>(train).first(
                                                            std::min<std::size_t>(train.size(), 64))
                                                      : std::span<const QualityExample>(holdout));

  QTuneReport report;
  report.config = config;
  report.subset_size = static_cast<int>(pool.size());
  report.train_size = static_cast<int>(train.size());
  report.holdout_size = static_cast<int>(holdout.size());
  if (config.max_iterations == 0) {
    report.stop_reason = "cap";
    return report;
  }

  backbone.prepare(config);
  const std::uint64_t val_seed = mix64(config.seed, 0xE7A1);
  std::optional<double> baseline_stat = std::isfinite(config.drift_tolerance)
                                            ? backbone.sample_statistic(val_seed)
                                            : std::nullopt;
  std::vector<double> proxies;
  auto run_eval = [&](std::int64_t step) {
    EvalPoint e{step, backbone.validation_loss(val, val_seed), std::nullopt, 0.0};
    e.proxy = e.validation_loss;
    if (baseline_stat) {
      e.statistic = backbone.sample_statistic(val_seed);
      if (e.statistic && std::abs(*e.statistic - *baseline_stat) > config.drift_tolerance)
        e.proxy = std::numeric_limits<double>::infinity();
    }
    report.evals.push_back(e);
    proxies.push_back(e.proxy);
  };
  if (config.eval_every > 0) run_eval(0);

  const std::size_t B = static_cast<std::size_t>(config.batch_size);
  const bool with_replacement = train.size() < B;
  std::vector<std::size_t> epoch_order;
  std::size_t cursor = 0, epoch = 0;
  std::vector<QualityExample> batch(B);
  std::int64_t step = 0;
  while (true) {
    const auto decision = check_early_stop(step, proxies, config);
    if (decision.stop) {
      report.stop_reason = decision.reason;
      break;
    }
    if (with_replacement) {
      Rng rng = make_rng(mix64(config.seed, 0xBA7C), static_cast<std::uint64_t>(step));
      for (auto& b : batch) b = train[rng() % train.size()];
    } else {
      for (auto& b : batch) {
        if (cursor == epoch_order.size()) {
          epoch_order = seeded_permutation(train.size(), config.seed, 0xE90C + epoch++);
          cursor = 0;
        }
        b = train[epoch_order[cursor++]];
      }
    }
    const double loss = backbone.train_step(batch, config.noise_offset, step);
    ++step;
    report.steps_run = static_cast<int>(step);
    report.loss_curve.push_back({step, loss, config.noise_offset});
    if (hooks.on_step) hooks.on_step(report.loss_curve.back());
    if (config.eval_every > 0 && step % config.eval_every == 0) run_eval(step);
    if (config.grid_every > 0 && step % config.grid_every == 0 && hooks.on_grid) hooks.on_grid(step, backbone);
  }
  return report;
}

}  // namespace curatune::qtune
