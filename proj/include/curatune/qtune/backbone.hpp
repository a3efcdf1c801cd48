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

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curatune/image/image.hpp"
#include "curatune/qtune/config.hpp"

namespace curatune::qtune {

struct QualityExample {
  std::string id;
  Image image;
  std::string caption;
};

/// What the quality-tuning trainer needs from a generative model.
///
/// Call protocol used by quality_tune():
///   ready() -> prepare(config) -> { train_step(batch, offset, step)
///   [validation_loss(holdout, seed) every eval_every steps] [sample(...) for grids] }*
/// Checkpoint I/O via save()/load() happens outside the loop.
class QTuneBackbone {
 public:
  virtual ~QTuneBackbone() = default;

  /// True once weights have been loaded from a pre-trained checkpoint.
  virtual bool ready() const = 0;
  /// Resets optimizer state for a tuning run.
  virtual void prepare(const QTuneConfig& config) = 0;
  /// One optimizer update on `batch` with the given noise offset; returns the loss.
  virtual double train_step(std::span<const QualityExample> batch, double noise_offset, std::int64_t step) = 0;
  /// Deterministic held-out loss proxy (no parameter updates).
  virtual double validation_loss(std::span<const QualityExample> holdout, std::uint64_t seed) = 0;
  virtual std::vector<Image> sample(std::span<const std::string> prompts, std::uint64_t seed) = 0;
  /// Optional scalar summary of generations used by the drift guard.
  virtual std::optional<double> sample_statistic(std::uint64_t /*seed*/) { return std::nullopt; }
  virtual void save(const std::filesystem::path& path) const = 0;
  virtual void load(const std::filesystem::path& path) = 0;
};

}  // namespace curatune::qtune
