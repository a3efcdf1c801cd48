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
#include <numbers>
#include <string>
#include <vector>

#include "curatune/core/error.hpp"

namespace curatune::diffusion {

/// Cumulative signal fraction alpha_bar[t], t = 0..num_steps-1.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
    if (alpha_bar_.empty()) throw ConfigError("noise schedule must have at least one step");
    for (std::size_t t = 0; t < alpha_bar_.size(); ++t) {
      const double a = alpha_bar_[t];
      if (!(a > 0.0 && a <= 1.0)) throw ConfigError("alpha_bar[" + std::to_string(t) + "] outside (0, 1]");
      if (t > 0 && !(a < alpha_bar_[t - 1]))
        throw ConfigError("alpha_bar must be strictly decreasing (violated at t=" + std::to_string(t) + ")");
    }
  }

  /// Cosine schedule with betas clipped at max_beta.
  static NoiseSchedule cosine(int num_steps = 1000, double s = 0.008, double max_beta = 0.999) {
    if (num_steps < 1) throw ConfigError("num_steps must be >= 1");
    auto f = [&](double t) {
      const double c = std::cos((t / num_steps + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    std::vector<double> ab(static_cast<std::size_t>(num_steps));
    double prod = 1.0;
    for (int t = 0; t < num_steps; ++t) {
      const double beta = std::min(1.0 - f(t + 1.0) / f(t), max_beta);
      prod *= 1.0 - beta;
      ab[static_cast<std::size_t>(t)] = prod;
    }
    return NoiseSchedule(std::move(ab));
  }

  int num_steps() const { return static_cast<int>(alpha_bar_.size()); }
  double alpha_bar(int t) const {
    if (t < 0 || t >= num_steps())
      throw ConfigError("timestep " + std::to_string(t) + " out of range [0, " + std::to_string(num_steps()) + ")");
    return alpha_bar_[static_cast<std::size_t>(t)];
  }
  const std::vector<double>& values() const { return alpha_bar_; }

 private:
  std::vector<double> alpha_bar_;
};

}  // namespace curatune::diffusion
