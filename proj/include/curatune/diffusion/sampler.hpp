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
#include <span>
#include <string>
#include <vector>

#include "curatune/diffusion/model.hpp"

namespace curatune::diffusion {

struct SampleOptions {
  int steps = 50;
  double guidance_scale = 3.0;
  std::uint64_t seed = 0;
  /// Pixel resolution; 0 uses the model's last training resolution.
  int resolution = 0;
  /// Bound on the predicted clean latent (latents are unit-scaled).
  double x0_clip = 4.0;
};

/// Deterministic DDIM sampling in latent space. Classifier-free guidance is
/// applied when guidance_scale > 1, with all-zero embeddings as the
/// unconditional branch. Returns latents [N, C, h, w].
inline Tensor<float> sample_latents(const LatentDiffusion& model, const Conditioning<float>& cond, int n,
                                    const SampleOptions& opt) {
  if (opt.steps < 1) throw ConfigError("sample: steps must be >= 1");
  if (n < 1) throw ConfigError("sample: need at least one sample");
  const auto& dc = model.denoiser().config();
  if ((!cond.a.empty() && (cond.a.rank() != 3 || cond.a.dim(2) != dc.cond_dim_a || cond.a.dim(0) != n)) ||
      (!cond.b.empty() && (cond.b.rank() != 3 || cond.b.dim(2) != dc.cond_dim_b || cond.b.dim(0) != n)))
    throw ShapeError("sample: conditioning dims do not match the denoiser (expected A=" + std::to_string(dc.cond_dim_a) +
                     ", B=" + std::to_string(dc.cond_dim_b) + ")");
  const int res = opt.resolution > 0 ? opt.resolution : model.resolution();
  model.check_resolution(res);
  const int side = res / model.autoencoder().config().spatial_factor();
  const auto& sched = model.schedule();
  const int T = sched.num_steps();
  const int steps = std::min(opt.steps, T);

  ag::NoGradGuard guard;
  Tensor<float> x(Shape{n, dc.in_channels, side, side});
  Rng rng = make_rng(opt.seed, 0x5A3);
  fill_normal(x, rng);

  const bool cfg = opt.guidance_scale > 1.0 && !(cond.a.empty() && cond.b.empty());
  Conditioning<float> both = cond;
  if (cfg) {
    // One pass over [cond; uncond] stacked along the batch axis.
    auto dup = [](const Tensor<float>& c) {
      if (c.empty()) return c;
      Shape s = c.shape();
      s[0] *= 2;
      AlignedVector<float> d(c.vec());
      d.resize(c.numel() * 2, 0.0f);
      return Tensor<float>(s, std::move(d));
    };
    both = {dup(cond.a), dup(cond.b)};
  }
  const std::size_t per = x.numel();
  for (int k = steps - 1; k >= 0; --k) {
    const int t = static_cast<int>((static_cast<long long>(k + 1) * T) / steps) - 1;
    const double ab = sched.alpha_bar(t);
    const double ab_prev = k > 0 ? sched.alpha_bar(static_cast<int>((static_cast<long long>(k) * T) / steps) - 1) : 1.0;
    Tensor<float> eps;
    if (cfg) {
      AlignedVector<float> xx(x.vec());
      xx.insert(xx.end(), x.vec().begin(), x.vec().end());
      Shape s2 = x.shape();
      s2[0] *= 2;
      std::vector<int> ts(static_cast<std::size_t>(2 * n), t);
      Tensor<float> out = model.denoiser()(ag::Var<float>(Tensor<float>(s2, std::move(xx))), ts, both).value();
      eps = Tensor<float>(x.shape());
      const float g = static_cast<float>(opt.guidance_scale);
      for (std::size_t i = 0; i < per; ++i) eps[i] = out[per + i] + g * (out[i] - out[per + i]);
    } else {
      std::vector<int> ts(static_cast<std::size_t>(n), t);
      eps = model.denoiser()(ag::Var<float>(x), ts, cond).value();
    }
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    const double spa = std::sqrt(ab_prev), spb = std::sqrt(1.0 - ab_prev);
    for (std::size_t i = 0; i < per; ++i) {
      double x0 = (x[i] - sb * eps[i]) / sa;
      x0 = std::clamp(x0, -opt.x0_clip, opt.x0_clip);
      const double e = (x[i] - sa * x0) / sb;  // noise consistent with the clipped x0
      x[i] = static_cast<float>(spa * x0 + spb * e);
    }
  }
  return x;
}

/// Samples one image per prompt.
inline std::vector<Image> sample(const LatentDiffusion& model, std::span<const std::string> prompts,
                                 const SampleOptions& opt) {
  const Conditioning<float> cond = model.condition(prompts);
  return model.decode_latents(sample_latents(model, cond, static_cast<int>(prompts.size()), opt));
}

}  // namespace curatune::diffusion
