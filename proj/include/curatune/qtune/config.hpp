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

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "curatune/core/error.hpp"
#include "curatune/core/io.hpp"

namespace curatune::qtune {

/// Hard default bound on quality-tuning iterations.
inline constexpr int kIterationCap = 15000;

struct QTuneConfig {
  int batch_size = 64;
  double noise_offset = 0.1;
  int max_iterations = kIterationCap;
  int eval_every = 250;
  /// Consecutive non-improving evals before stopping; 0 disables.
  int early_stop_patience = 5;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  std::optional<int> subset_size;
  /// Required to set max_iterations above kIterationCap.
  bool allow_exceeding_cap = false;
  /// Fraction of the quality set held out for the validation proxy.
  double holdout_fraction = 0.05;
  /// Drift guard: an eval counts as worsening when the backbone's sample
  /// statistic moves further than this from its pre-tune value. Infinite disables.
  double drift_tolerance = std::numeric_limits<double>::infinity();
  /// Sample-grid cadence in steps; 0 disables.
  int grid_every = 0;
  /// Probability of training a step example unconditionally (keeps guidance usable).
  double cond_drop_prob = 0.1;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
    if (max_iterations > kIterationCap && !allow_exceeding_cap)
      throw ConfigError("max_iterations " + std::to_string(max_iterations) + " exceeds the " +
                        std::to_string(kIterationCap) + "-step cap; set allow_exceeding_cap to override");
    if (!(noise_offset >= 0.0)) throw ConfigError("noise_offset must be >= 0");
    if (eval_every < 0 || early_stop_patience < 0 || grid_every < 0)
      throw ConfigError("eval_every, early_stop_patience and grid_every must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (subset_size && *subset_size < 1) throw ConfigError("subset_size must be >= 1");
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) throw ConfigError("holdout_fraction must be in [0, 1)");
    if (!(drift_tolerance > 0.0)) throw ConfigError("drift_tolerance must be > 0");
    if (cond_drop_prob < 0.0 || cond_drop_prob > 1.0) throw ConfigError("cond_drop_prob must be in [0, 1]");
  }
};

inline void to_json(nlohmann::json& j, const QTuneConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"noise_offset", c.noise_offset},
       {"max_iterations", c.max_iterations},
       {"eval_every", c.eval_every},
       {"early_stop_patience", c.early_stop_patience},
       {"learning_rate", c.learning_rate},
       {"seed", c.seed},
       {"subset_size", c.subset_size ? nlohmann::json(*c.subset_size) : nlohmann::json(nullptr)},
       {"allow_exceeding_cap", c.allow_exceeding_cap},
       {"holdout_fraction", c.holdout_fraction},
       {"drift_tolerance", std::isfinite(c.drift_tolerance) ? nlohmann::json(c.drift_tolerance) : nlohmann::json(nullptr)},
       {"grid_every", c.grid_every},
       {"cond_drop_prob", c.cond_drop_prob}};
}

inline void from_json(const nlohmann::json& j, QTuneConfig& c) {
  io::check_keys(j,
                 {"batch_size", "noise_offset", "max_iterations", "eval_every", "early_stop_patience", "learning_rate",
                  "seed", "subset_size", "allow_exceeding_cap", "holdout_fraction", "drift_tolerance", "grid_every",
                  "cond_drop_prob"},
                 "quality-tune config");
  io::read_opt(j, "batch_size", c.batch_size);
  io::read_opt(j, "noise_offset", c.noise_offset);
  io::read_opt(j, "max_iterations", c.max_iterations);
  io::read_opt(j, "eval_every", c.eval_every);
  io::read_opt(j, "early_stop_patience", c.early_stop_patience);
  io::read_opt(j, "learning_rate", c.learning_rate);
  io::read_opt(j, "seed", c.seed);
  if (j.contains("subset_size") && !j["subset_size"].is_null()) c.subset_size = j["subset_size"].get<int>();
  io::read_opt(j, "allow_exceeding_cap", c.allow_exceeding_cap);
  io::read_opt(j, "holdout_fraction", c.holdout_fraction);
  io::read_opt(j, "drift_tolerance", c.drift_tolerance);
  io::read_opt(j, "grid_every", c.grid_every);
  io::read_opt(j, "cond_drop_prob", c.cond_drop_prob);
}

}  // namespace curatune::qtune
