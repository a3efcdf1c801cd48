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
#include <span>
#include <vector>

#include "curatune/core/random.hpp"
#include "curatune/core/tensor.hpp"
#include "curatune/diffusion/schedule.hpp"

namespace curatune::diffusion {

template <class T>
struct NoisedBatch {
  Tensor<T> x_t;
  Tensor<T> eps_target;
};

/// Forward-noises latents [N, C, H, W] at per-sample timesteps.
///
///   eps_target = eps + offset * eps_c
///   x_t        = sqrt(ab[t]) * x0 + sqrt(1 - ab[t]) * eps_target
///
/// eps is i.i.d. unit Gaussian per element; eps_c is one unit Gaussian per
/// (sample, channel), broadcast spatially. All of eps is drawn before any
/// eps_c, and eps_c is not drawn at all when offset == 0, so the zero-offset
/// path consumes exactly the rng stream of plain noising.
template <class T>
NoisedBatch<T> add_noise_with_offset(const Tensor<T>& x0, std::span<const int> t, const NoiseSchedule& schedule,
                                     double offset, Rng& rng) {
  if (x0.rank() != 4) throw ShapeError("add_noise_with_offset expects [N,C,H,W], got " + shape_str(x0.shape()));
  if (!(offset >= 0.0)) throw ConfigError("noise offset must be >= 0");
  const int N = x0.dim(0), C = x0.dim(1);
  if (static_cast<int>(t.size()) != N) throw ShapeError("one timestep per sample required");
  for (int ti : t) schedule.alpha_bar(ti);  // range check
  const std::size_t plane = static_cast<std::size_t>(x0.dim(2)) * x0.dim(3);

  NoisedBatch<T> out{Tensor<T>(x0.shape()), Tensor<T>(x0.shape())};
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& e : out.eps_target.vec()) e = static_cast<T>(normal(rng));
  if (offset > 0.0) {
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T shift = static_cast<T>(offset * normal(rng));
        T* p = out.eps_target.data() + (static_cast<std::size_t>(n) * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] += shift;
      }
  }
  const std::size_t per_sample = static_cast<std::size_t>(C) * plane;
  for (int n = 0; n < N; ++n) {
    const double ab = schedule.alpha_bar(t[static_cast<std::size_t>(n)]);
    const T a = static_cast<T>(std::sqrt(ab)), s = static_cast<T>(std::sqrt(1.0 - ab));
    for (std::size_t i = n * per_sample; i < (n + 1) * per_sample; ++i)
      out.x_t[i] = a * x0[i] + s * out.eps_target[i];
  }
  return out;
}

/// Single-timestep convenience overload.
template <class T>
NoisedBatch<T> add_noise_with_offset(const Tensor<T>& x0, int t, const NoiseSchedule& schedule, double offset, Rng& rng) {
  std::vector<int> ts(static_cast<std::size_t>(x0.rank() == 4 ? x0.dim(0) : 1), t);
  if (x0.rank() == 3) {
    auto r = add_noise_with_offset(x0.reshaped({1, x0.dim(0), x0.dim(1), x0.dim(2)}), ts, schedule, offset, rng);
    return {r.x_t.reshaped(x0.shape()), r.eps_target.reshaped(x0.shape())};
  }
  return add_noise_with_offset(x0, std::span<const int>(ts), schedule, offset, rng);
}

}  // namespace curatune::diffusion
