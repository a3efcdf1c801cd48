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
#include <span>
#include <string>
#include <vector>

#include "curatune/autoencoder/config.hpp"
#include "curatune/autoencoder/fourier.hpp"
#include "curatune/core/archive.hpp"
#include "curatune/core/autograd.hpp"
#include "curatune/core/nn.hpp"
#include "curatune/image/image.hpp"

namespace curatune::ae {

using ag::Var;

/// Encoded image. data is [latent_channels, H / 2^d, W / 2^d].
template <class T>
struct LatentTensor {
  Tensor<T> data;
  int source_height = 0;
  int source_width = 0;
};

/// Convolutional autoencoder with a diagonal-Gaussian latent.
///
/// Width at level l (l = 0 is full resolution) is base_width / 2 at level 0
/// and base_width below. Each downsampling block is a stride-2 3x3 conv;
/// each upsampling block is nearest 2x followed by a 3x3 conv.
template <class T>
class Autoencoder {
 public:
  struct Posterior {
    Var<T> mean;
    Var<T> logvar;
  };

  explicit Autoencoder(const AEConfig& config, std::uint64_t seed = 0) : config_(config) {
    config_.validate();
    Rng rng = make_rng(seed, 0xAE);
    const int d = config_.downsample_blocks;
    enc_in_ = nn::Conv2d<T>(params_, "enc.in", config_.input_channels(), width(0), 3, 1, rng);
    for (int i = 0; i < d; ++i)
      enc_down_.emplace_back(params_, "enc.down" + std::to_string(i), width(i), width(i + 1), 3, 2, rng);
    enc_mid_ = nn::Conv2d<T>(params_, "enc.mid", width(d), width(d), 3, 1, rng);
    enc_out_ = nn::Conv2d<T>(params_, "enc.out", width(d), 2 * config_.latent_channels, 3, 1, rng);
    dec_in_ = nn::Conv2d<T>(params_, "dec.in", config_.latent_channels, width(d), 3, 1, rng);
    dec_mid_ = nn::Conv2d<T>(params_, "dec.mid", width(d), width(d), 3, 1, rng);
    for (int i = d; i >= 1; --i)
      dec_up_.emplace_back(params_, "dec.up" + std::to_string(i), width(i), width(i - 1), 3, 1, rng);
    dec_out_ = nn::Conv2d<T>(params_, "dec.out", width(0), 3, 3, 1, rng);
  }

  const AEConfig& config() const { return config_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }
  std::size_t param_count() const { return params_.count(); }

  void check_resolution(int h, int w) const {
    const int f = config_.spatial_factor();
    if (h <= 0 || w <= 0 || h % f != 0 || w % f != 0)
      throw ShapeError("image resolution " + std::to_string(h) + "x" + std::to_string(w) + " must be divisible by " +
                       std::to_string(f) + " (2^downsample_blocks)");
  }

  /// x: [N, 3, H, W] pixels in [-1, 1].
  Posterior encode_posterior(const Var<T>& x) const {
    if (x.shape().size() != 4 || x.shape()[1] != 3) throw ShapeError("encode expects [N,3,H,W], got " + shape_str(x.shape()));
    check_resolution(x.shape()[2], x.shape()[3]);
    Var<T> h = config_.use_fourier_lift ? Var<T>(fourier_lift(x.value(), config_.fourier_num_freqs)) : x;
    h = ag::silu(enc_in_(h));
    for (const auto& down : enc_down_) h = ag::silu(down(h));
    h = ag::silu(enc_mid_(h));
    Var<T> moments = enc_out_(h);
    const int C = config_.latent_channels;
    return {ag::slice1(moments, 0, C), ag::clamp(ag::slice1(moments, C, C), T(-30), T(20))};
  }

  /// z: [N, latent_channels, h, w]; returns unclamped pixels.
  Var<T> decode_graph(const Var<T>& z) const {
    if (z.shape().size() != 4 || z.shape()[1] != config_.latent_channels)
      throw ConfigError("latent has " + (z.shape().size() == 4 ? std::to_string(z.shape()[1]) : shape_str(z.shape())) +
                        " channels, autoencoder expects " + std::to_string(config_.latent_channels));
    Var<T> h = ag::silu(dec_in_(z));
    h = ag::silu(dec_mid_(h));
    for (const auto& up : dec_up_) h = ag::silu(up(ag::upsample2x(h)));
    return dec_out_(h);
  }

  /// Posterior means for a batch of images [N, 3, H, W] -> [N, C, H/f, W/f].
  Tensor<T> encode_batch(const Tensor<T>& images) const {
    ag::NoGradGuard guard;
    return encode_posterior(Var<T>(images)).mean.value();
  }

  /// Decodes [N, C, h, w] to clamped pixels [N, 3, h*f, w*f].
  Tensor<T> decode_batch(const Tensor<T>& latents) const {
    ag::NoGradGuard guard;
    Tensor<T> out = decode_graph(Var<T>(latents)).value();
    for (auto& v : out.vec()) v = std::clamp(v, T(-1), T(1));
    return out;
  }

  LatentTensor<T> encode(const Image& image) const {
    check_resolution(image.height, image.width);
    const Tensor<T> x = images_to_tensor<T>(std::span<const Image>(&image, 1));
    Tensor<T> z = encode_batch(x);
    Shape s(z.shape().begin() + 1, z.shape().end());
    return {z.reshaped(s), image.height, image.width};
  }

  Image decode(const LatentTensor<T>& latent) const {
    const auto& s = latent.data.shape();
    if (s.size() != 3 || s[0] != config_.latent_channels)
      throw ConfigError("latent shape " + shape_str(s) + " does not match latent_channels=" +
                        std::to_string(config_.latent_channels));
    const int f = config_.spatial_factor();
    if (latent.source_height != s[1] * f || latent.source_width != s[2] * f)
      throw ShapeError("latent spatial dims inconsistent with source resolution");
    Tensor<T> out = decode_batch(latent.data.reshaped({1, s[0], s[1], s[2]}));
    return tensor_to_images(out).front();
  }

  Archive to_archive(std::int64_t step = 0) const {
    Archive a;
    a.kind = "autoencoder";
    a.config = config_;
    a.step = step;
    a.put_params(params_);
    return a;
  }

  static Autoencoder from_archive(const Archive& a) { return load(a.config.get<AEConfig>(), a, ""); }

  /// Loads weights stored under `prefix` (used when embedded in another checkpoint).
  static Autoencoder load(const AEConfig& config, const Archive& a, const std::string& prefix) {
    Autoencoder m(config);
    a.get_params(m.params_, prefix);
    return m;
  }

  Autoencoder clone() const {
    Autoencoder m(config_);
    m.params_.copy_values_from(params_);
    return m;
  }

  Autoencoder(Autoencoder&&) noexcept = default;
  Autoencoder& operator=(Autoencoder&&) noexcept = default;
  Autoencoder(const Autoencoder&) = delete;
  Autoencoder& operator=(const Autoencoder&) = delete;

 private:
  int width(int level) const { return level == 0 ? std::max(2, config_.base_width / 2) : config_.base_width; }

  AEConfig config_;
  nn::ParamSet<T> params_;
  nn::Conv2d<T> enc_in_, enc_mid_, enc_out_, dec_in_, dec_mid_, dec_out_;
  std::vector<nn::Conv2d<T>> enc_down_, dec_up_;
};

}  // namespace curatune::ae
