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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curatune/core/archive.hpp"
#include "curatune/core/autograd.hpp"
#include "curatune/core/io.hpp"
#include "curatune/core/nn.hpp"

namespace curatune::diffusion {

using ag::Var;

struct DenoiserConfig {
  int in_channels = 4;  // latent channels
  int base_channels = 32;
  int res_blocks_per_stage = 1;
  int stages = 2;
  int cond_dim_a = 32;
  int cond_dim_b = 48;

  void validate() const {
    if (in_channels < 1) throw ConfigError("denoiser in_channels must be >= 1");
    if (base_channels < 2 || base_channels % 2) throw ConfigError("denoiser base_channels must be even and >= 2");
    if (res_blocks_per_stage < 1) throw ConfigError("denoiser res_blocks_per_stage must be >= 1");
    if (stages < 1) throw ConfigError("denoiser stages must be >= 1");
    if (cond_dim_a < 1 || cond_dim_b < 1) throw ConfigError("denoiser cond dims must be >= 1");
  }
  int channels(int stage) const { return base_channels * (stage + 1); }
  int time_dim() const { return base_channels; }
  int attn_dim() const { return channels(stages - 1); }
  /// Latent sides must be divisible by this.
  int spatial_divisor() const { return 1 << (stages - 1); }

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

inline void to_json(nlohmann::json& j, const DenoiserConfig& c) {
  j = {{"in_channels", c.in_channels}, {"base_channels", c.base_channels},
       {"res_blocks_per_stage", c.res_blocks_per_stage}, {"stages", c.stages},
       {"cond_dim_a", c.cond_dim_a}, {"cond_dim_b", c.cond_dim_b}};
}

inline void from_json(const nlohmann::json& j, DenoiserConfig& c) {
  io::check_keys(j, {"in_channels", "base_channels", "res_blocks_per_stage", "stages", "cond_dim_a", "cond_dim_b"},
                 "denoiser");
  io::read_opt(j, "in_channels", c.in_channels);
  io::read_opt(j, "base_channels", c.base_channels);
  io::read_opt(j, "res_blocks_per_stage", c.res_blocks_per_stage);
  io::read_opt(j, "stages", c.stages);
  io::read_opt(j, "cond_dim_a", c.cond_dim_a);
  io::read_opt(j, "cond_dim_b", c.cond_dim_b);
}

/// Conditioning for a batch: slot A [N, La, cond_dim_a], slot B [N, Lb, cond_dim_b].
/// An empty tensor disables that slot; with both empty the attention block is skipped.
template <class T>
struct Conditioning {
  Tensor<T> a;
  Tensor<T> b;
};

namespace detail {

inline std::size_t res_block_params(int in, int out, int time_dim) {
  std::size_t n = nn::Conv2d<float>::param_count(in, out, 3) + nn::Linear<float>::param_count(time_dim, out) +
                  nn::Conv2d<float>::param_count(out, out, 3);
  if (in != out) n += nn::Conv2d<float>::param_count(in, out, 1);
  return n;
}

}  // namespace detail

/// Parameter count implied by a config, computed independently of the model.
inline std::size_t analytic_param_count(const DenoiserConfig& c) {
  using nn::Linear;
  using Conv = nn::Conv2d<float>;
  const int td = c.time_dim(), S = c.stages, R = c.res_blocks_per_stage, A = c.attn_dim();
  std::size_t n = Linear<float>::param_count(td, td) * 2;  // time MLP
  n += Conv::param_count(c.in_channels, c.channels(0), 3);
  for (int s = 0; s < S; ++s) {
    for (int r = 0; r < R; ++r) {
      const int in = r > 0 ? c.channels(s) : (s == 0 ? c.channels(0) : c.channels(s - 1));
      n += detail::res_block_params(in, c.channels(s), td);
    }
    if (s + 1 < S) n += Conv::param_count(c.channels(s), c.channels(s), 3);
  }
  n += detail::res_block_params(A, A, td);
  n += Linear<float>::param_count(c.cond_dim_a, A) + Linear<float>::param_count(c.cond_dim_b, A) +
       4 * Linear<float>::param_count(A, A);
  for (int s = S - 1; s >= 0; --s) {
    const int deep = s == S - 1 ? c.channels(S - 1) : c.channels(s + 1);
    if (s + 1 < S) n += Conv::param_count(deep, deep, 3);
    for (int r = 0; r < R; ++r)
      n += detail::res_block_params(r == 0 ? deep + c.channels(s) : c.channels(s), c.channels(s), td);
  }
  n += Conv::param_count(c.channels(0), c.in_channels, 3);
  return n;
}

/// Sinusoidal timestep features [N, dim].
template <class T>
Tensor<T> timestep_features(std::span<const int> t, int dim) {
  Tensor<T> out(Shape{static_cast<int>(t.size()), dim});
  const int half = dim / 2;
  for (std::size_t n = 0; n < t.size(); ++n)
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double arg = t[n] * freq;
      out[n * dim + i] = static_cast<T>(std::sin(arg));
      out[n * dim + half + i] = static_cast<T>(std::cos(arg));
    }
  return out;
}

template <class T>
struct ResBlock {
  nn::Conv2d<T> conv1, conv2, skip;
  nn::Linear<T> temb;
  bool has_skip = false;

  ResBlock() = default;
  ResBlock(nn::ParamSet<T>& p, const std::string& name, int in, int out, int time_dim, Rng& rng)
      : conv1(p, name + ".conv1", in, out, 3, 1, rng),
        conv2(p, name + ".conv2", out, out, 3, 1, rng, 0.5),
        temb(p, name + ".temb", time_dim, out, rng),
        has_skip(in != out) {
    if (has_skip) skip = nn::Conv2d<T>(p, name + ".skip", in, out, 1, 1, rng);
  }

  Var<T> operator()(const Var<T>& x, const Var<T>& t) const {
    Var<T> h = conv1(ag::silu(x));
    h = ag::channel_bias(h, temb(t));
    h = conv2(ag::silu(h));
    return ag::add(h, has_skip ? skip(x) : x);
  }
};

/// Toy U-Net predicting the noise; cross-attention over the concatenated
/// slot-A/slot-B token sequences at the lowest resolution.
template <class T>
class Denoiser {
 public:
  explicit Denoiser(const DenoiserConfig& config, std::uint64_t seed = 0) : cfg_(config) {
    cfg_.validate();
    Rng rng = make_rng(seed, 0xD0);
    const int td = cfg_.time_dim(), S = cfg_.stages, R = cfg_.res_blocks_per_stage, A = cfg_.attn_dim();
    t1_ = nn::Linear<T>(p_, "time.l1", td, td, rng);
    t2_ = nn::Linear<T>(p_, "time.l2", td, td, rng);
    in_ = nn::Conv2d<T>(p_, "in", cfg_.in_channels, cfg_.channels(0), 3, 1, rng);
    down_blocks_.resize(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) {
      for (int r = 0; r < R; ++r) {
        const int in = r > 0 ? cfg_.channels(s) : (s == 0 ? cfg_.channels(0) : cfg_.channels(s - 1));
        down_blocks_[s].emplace_back(p_, name("down", s, r), in, cfg_.channels(s), td, rng);
      }
      if (s + 1 < S) downsample_.emplace_back(p_, "down" + std::to_string(s) + ".ds", cfg_.channels(s), cfg_.channels(s), 3, 2, rng);
    }
    mid_ = ResBlock<T>(p_, "mid.res", A, A, td, rng);
    proj_a_ = nn::Linear<T>(p_, "attn.proj_a", cfg_.cond_dim_a, A, rng);
    proj_b_ = nn::Linear<T>(p_, "attn.proj_b", cfg_.cond_dim_b, A, rng);
    q_ = nn::Linear<T>(p_, "attn.q", A, A, rng);
    k_ = nn::Linear<T>(p_, "attn.k", A, A, rng);
    v_ = nn::Linear<T>(p_, "attn.v", A, A, rng);
    o_ = nn::Linear<T>(p_, "attn.o", A, A, rng, 0.5);
    up_blocks_.resize(static_cast<std::size_t>(S));
    for (int s = S - 1; s >= 0; --s) {
      const int deep = s == S - 1 ? cfg_.channels(S - 1) : cfg_.channels(s + 1);
      if (s + 1 < S) upsample_.emplace_back(p_, "up" + std::to_string(s) + ".us", deep, deep, 3, 1, rng);
      for (int r = 0; r < R; ++r)
        up_blocks_[s].emplace_back(p_, name("up", s, r), r == 0 ? deep + cfg_.channels(s) : cfg_.channels(s),
                                   cfg_.channels(s), td, rng);
    }
    out_ = nn::Conv2d<T>(p_, "out", cfg_.channels(0), cfg_.in_channels, 3, 1, rng, 0.5);
  }

  const DenoiserConfig& config() const { return cfg_; }
  nn::ParamSet<T>& params() { return p_; }
  const nn::ParamSet<T>& params() const { return p_; }
  std::size_t param_count() const { return p_.count(); }

  /// x: [N, in_channels, h, w]; t: one timestep per sample.
  Var<T> operator()(const Var<T>& x, std::span<const int> t, const Conditioning<T>& cond) const {
    const auto& s = x.shape();
    if (s.size() != 4 || s[1] != cfg_.in_channels)
      throw ShapeError("denoiser expects [N," + std::to_string(cfg_.in_channels) + ",h,w], got " + shape_str(s));
    const int div = cfg_.spatial_divisor();
    if (s[2] % div || s[3] % div)
      throw ShapeError("latent size " + std::to_string(s[2]) + "x" + std::to_string(s[3]) + " must be divisible by " +
                       std::to_string(div));
    if (static_cast<int>(t.size()) != s[0]) throw ShapeError("denoiser: one timestep per sample required");
    check_cond(cond.a, cfg_.cond_dim_a, s[0], "A");
    check_cond(cond.b, cfg_.cond_dim_b, s[0], "B");

    Var<T> temb = t2_(ag::silu(t1_(Var<T>(timestep_features<T>(t, cfg_.time_dim())))));
    Var<T> h = in_(x);
    const int S = cfg_.stages;
    std::vector<Var<T>> skips;
    for (int st = 0; st < S; ++st) {
      for (const auto& b : down_blocks_[st]) h = b(h, temb);
      skips.push_back(h);
      if (st + 1 < S) h = downsample_[st](h);
    }
    h = mid_(h, temb);
    h = attend(h, cond);
    int us = 0;
    for (int st = S - 1; st >= 0; --st) {
      if (st + 1 < S) h = upsample_[us++](ag::upsample2x(h));
      h = ag::concat1(h, skips[st]);
      for (const auto& b : up_blocks_[st]) h = b(h, temb);
    }
    return out_(ag::silu(h));
  }

  Archive to_archive() const {
    Archive a;
    a.kind = "denoiser";
    a.config = cfg_;
    a.put_params(p_);
    return a;
  }

  void load_from(const Archive& a, const std::string& prefix = "") { a.get_params(p_, prefix); }

  Denoiser(Denoiser&&) noexcept = default;
  Denoiser& operator=(Denoiser&&) noexcept = default;
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;

 private:
  static std::string name(const char* dir, int s, int r) {
    return std::string(dir) + std::to_string(s) + ".res" + std::to_string(r);
  }

  static void check_cond(const Tensor<T>& c, int dim, int batch, const char* slot) {
    if (c.empty()) return;
    if (c.rank() != 3 || c.dim(0) != batch || c.dim(2) != dim)
      throw ShapeError(std::string("conditioning slot ") + slot + " must be [" + std::to_string(batch) + ",L," +
                       std::to_string(dim) + "], got " + shape_str(c.shape()));
  }

  Var<T> attend(const Var<T>& h, const Conditioning<T>& cond) const {
    if (cond.a.empty() && cond.b.empty()) return h;
    const int N = h.shape()[0], C = h.shape()[1], HW = h.shape()[2] * h.shape()[3];
    Var<T> ctx;
    if (!cond.a.empty()) ctx = proj_a_(Var<T>(cond.a));
    if (!cond.b.empty()) {
      Var<T> b = proj_b_(Var<T>(cond.b));
      ctx = ctx.defined() ? ag::concat1(ctx, b) : b;
    }
    Var<T> tokens = ag::transpose12(ag::reshape(h, {N, C, HW}));  // [N, HW, C]
    Var<T> q = q_(tokens), k = k_(ctx), v = v_(ctx);
    Var<T> att = ag::softmax_last(ag::scale(ag::bmm_nt(q, k), static_cast<T>(1.0 / std::sqrt(static_cast<double>(C)))));
    Var<T> o = o_(ag::bmm(att, v));  // [N, HW, C]
    return ag::add(h, ag::reshape(ag::transpose12(o), h.shape()));
  }

  DenoiserConfig cfg_;
  nn::ParamSet<T> p_;
  nn::Linear<T> t1_, t2_, proj_a_, proj_b_, q_, k_, v_, o_;
  nn::Conv2d<T> in_, out_;
  std::vector<std::vector<ResBlock<T>>> down_blocks_, up_blocks_;
  std::vector<nn::Conv2d<T>> downsample_, upsample_;
  ResBlock<T> mid_;
};

}  // namespace curatune::diffusion
