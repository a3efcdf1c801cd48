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

#include "curatune/autoencoder/model.hpp"
#include "curatune/diffusion/denoiser.hpp"
#include "curatune/diffusion/schedule.hpp"
#include "curatune/diffusion/text_embed.hpp"
#include "curatune/image/image.hpp"

namespace curatune::diffusion {

/// Which text-conditioning slots feed the cross-attention.
struct TextCond {
  bool slot_a = true;  // CLIP-like
  bool slot_b = true;  // T5-like
  int max_tokens_a = 8;
  int max_tokens_b = 12;

  friend bool operator==(const TextCond&, const TextCond&) = default;
};

inline void to_json(nlohmann::json& j, const TextCond& c) {
  j = {{"slot_a", c.slot_a}, {"slot_b", c.slot_b}, {"max_tokens_a", c.max_tokens_a}, {"max_tokens_b", c.max_tokens_b}};
}

inline void from_json(const nlohmann::json& j, TextCond& c) {
  if (j.is_boolean()) {  // shorthand: one toggle for both slots
    c.slot_a = c.slot_b = j.get<bool>();
    return;
  }
  io::check_keys(j, {"slot_a", "slot_b", "max_tokens_a", "max_tokens_b"}, "text_cond");
  io::read_opt(j, "slot_a", c.slot_a);
  io::read_opt(j, "slot_b", c.slot_b);
  io::read_opt(j, "max_tokens_a", c.max_tokens_a);
  io::read_opt(j, "max_tokens_b", c.max_tokens_b);
}

/// Frozen autoencoder + trainable denoiser + text encoders + schedule.
/// Latents seen by the denoiser are AE posterior means divided by latent_scale.
class LatentDiffusion {
 public:
  LatentDiffusion(ae::Autoencoder<float> autoencoder, const DenoiserConfig& denoiser, const TextCond& text_cond,
                  int schedule_steps, std::uint64_t seed)
      : ae_(std::move(autoencoder)),
        unet_(checked(denoiser, ae_.config()), seed),
        text_cond_(text_cond),
        schedule_(NoiseSchedule::cosine(schedule_steps)),
        enc_a_(denoiser.cond_dim_a, text_cond.max_tokens_a, kSlotASalt),
        enc_b_(denoiser.cond_dim_b, text_cond.max_tokens_b, kSlotBSalt) {}

  const ae::Autoencoder<float>& autoencoder() const { return ae_; }
  Denoiser<float>& denoiser() { return unet_; }
  const Denoiser<float>& denoiser() const { return unet_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const TextCond& text_cond() const { return text_cond_; }

  double latent_scale() const { return latent_scale_; }
  void set_latent_scale(double s) {
    if (!(s > 0.0) || !std::isfinite(s)) throw NumericError("latent scale must be positive and finite");
    latent_scale_ = s;
  }
  /// Resolution of the most recent training stage (used as the default sampling size).
  int resolution() const { return resolution_; }
  void set_resolution(int r) { resolution_ = r; }

  /// Checks a pixel resolution against the AE and denoiser divisibility contracts.
  void check_resolution(int px) const {
    const int f = ae_.config().spatial_factor();
    const int div = f * unet_.config().spatial_divisor();
    if (px <= 0 || px % div != 0)
      throw ConfigError("resolution " + std::to_string(px) + " is not divisible by " + std::to_string(div) +
                        " (2^downsample_blocks x denoiser stage divisor)");
  }

  /// Images [N,3,H,W] -> scaled latents.
  Tensor<float> encode_images(std::span<const Image> images, std::size_t chunk = 64) const {
    std::vector<Tensor<float>> parts;
    for (std::size_t i = 0; i < images.size(); i += chunk) {
      auto sub = images.subspan(i, std::min(chunk, images.size() - i));
      for (const auto& im : sub) ae_.check_resolution(im.height, im.width);
      Tensor<float> z = ae_.encode_batch(images_to_tensor<float>(sub));
      const float inv = static_cast<float>(1.0 / latent_scale_);
      for (auto& v : z.vec()) v *= inv;
      parts.push_back(std::move(z));
    }
    return concat_batches(parts);
  }

  std::vector<Image> decode_latents(const Tensor<float>& latents) const {
    Tensor<float> z = latents;
    const float s = static_cast<float>(latent_scale_);
    for (auto& v : z.vec()) v *= s;
    return tensor_to_images(ae_.decode_batch(z));
  }

  /// Per-prompt slot embeddings [L, D]; disabled slots return empty tensors.
  std::pair<Tensor<float>, Tensor<float>> embed(std::string_view prompt) const {
    return {text_cond_.slot_a ? enc_a_.encode(prompt) : Tensor<float>{},
            text_cond_.slot_b ? enc_b_.encode(prompt) : Tensor<float>{}};
  }

  /// Batched conditioning for prompts.
  Conditioning<float> condition(std::span<const std::string> prompts) const {
    std::vector<Tensor<float>> a, b;
    for (const auto& p : prompts) {
      auto [ea, eb] = embed(p);
      if (text_cond_.slot_a) a.push_back(std::move(ea));
      if (text_cond_.slot_b) b.push_back(std::move(eb));
    }
    return {a.empty() ? Tensor<float>{} : stack<float>(a), b.empty() ? Tensor<float>{} : stack<float>(b)};
  }

  /// All-zero (unconditional) conditioning with the same shapes as `c`.
  static Conditioning<float> unconditional_like(const Conditioning<float>& c) {
    return {c.a.empty() ? Tensor<float>{} : Tensor<float>(c.a.shape()),
            c.b.empty() ? Tensor<float>{} : Tensor<float>(c.b.shape())};
  }

  Archive to_archive(std::int64_t step) const {
    Archive a;
    a.kind = "latent_diffusion";
    a.step = step;
    a.config = {{"autoencoder", ae_.config()},
                {"denoiser", unet_.config()},
                {"text_cond", text_cond_},
                {"schedule_steps", schedule_.num_steps()}};
    a.meta = {{"latent_scale", latent_scale_}, {"resolution", resolution_}};
    a.put_params(ae_.params(), "ae.");
    a.put_params(unet_.params(), "unet.");
    return a;
  }

  static LatentDiffusion from_archive(const Archive& a) {
    if (a.kind != "latent_diffusion")
      throw ConfigError("checkpoint kind is '" + a.kind + "', expected 'latent_diffusion'");
    auto aecfg = a.config.at("autoencoder").get<ae::AEConfig>();
    LatentDiffusion m(ae::Autoencoder<float>::load(aecfg, a, "ae."), a.config.at("denoiser").get<DenoiserConfig>(),
                      a.config.at("text_cond").get<TextCond>(), a.config.at("schedule_steps").get<int>(), 0);
    m.unet_.load_from(a, "unet.");
    m.latent_scale_ = a.meta.value("latent_scale", 1.0);
    m.resolution_ = a.meta.value("resolution", 0);
    return m;
  }

  LatentDiffusion(LatentDiffusion&&) noexcept = default;
  LatentDiffusion& operator=(LatentDiffusion&&) noexcept = default;

 private:
  static const DenoiserConfig& checked(const DenoiserConfig& d, const ae::AEConfig& a) {
    if (d.in_channels != a.latent_channels)
      throw ConfigError("denoiser in_channels=" + std::to_string(d.in_channels) + " but autoencoder latent_channels=" +
                        std::to_string(a.latent_channels));
    return d;
  }

  static Tensor<float> concat_batches(const std::vector<Tensor<float>>& parts) {
    if (parts.empty()) return {};
    Shape s = parts.front().shape();
    s[0] = 0;
    std::vector<float> data;
    for (const auto& p : parts) {
      s[0] += p.dim(0);
      data.insert(data.end(), p.vec().begin(), p.vec().end());
    }
    return Tensor<float>(s, std::move(data));
  }

  ae::Autoencoder<float> ae_;
  Denoiser<float> unet_;
  TextCond text_cond_;
  NoiseSchedule schedule_;
  HashedBagEncoder enc_a_, enc_b_;
  double latent_scale_ = 1.0;
  int resolution_ = 0;
};

}  // namespace curatune::diffusion
