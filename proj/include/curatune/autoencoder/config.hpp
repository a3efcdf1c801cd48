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

#include <string>

#include <nlohmann/json.hpp>

#include "curatune/autoencoder/fourier.hpp"
#include "curatune/core/error.hpp"
#include "curatune/core/io.hpp"

namespace curatune::ae {

struct AEConfig {
  int latent_channels = 4;
  int downsample_blocks = 3;
  bool use_fourier_lift = false;
  int fourier_num_freqs = 4;
  bool use_adversarial_loss = false;
  int base_width = 32;
  double recon_loss_weight = 1.0;
  double adv_loss_weight = 0.05;
  double kl_or_reg_weight = 1e-6;

  void validate() const {
    if (latent_channels < 1) throw ConfigError("latent_channels must be >= 1");
    if (downsample_blocks < 1) throw ConfigError("downsample_blocks must be >= 1");
    if (fourier_num_freqs < 0) throw ConfigError("fourier_num_freqs must be >= 0");
    if (base_width < 2) throw ConfigError("base_width must be >= 2");
    if (recon_loss_weight < 0 || adv_loss_weight < 0 || kl_or_reg_weight < 0)
      throw ConfigError("loss weights must be nonnegative");
  }

  int input_channels() const { return use_fourier_lift ? lifted_channels(fourier_num_freqs) : 3; }
  /// Linear downsampling factor per side.
  int spatial_factor() const { return 1 << downsample_blocks; }
  /// Area compression factor, 4^downsample_blocks.
  int area_compression() const { return spatial_factor() * spatial_factor(); }

  friend bool operator==(const AEConfig&, const AEConfig&) = default;
};

inline void to_json(nlohmann::json& j, const AEConfig& c) {
  j = {{"latent_channels", c.latent_channels},       {"downsample_blocks", c.downsample_blocks},
       {"use_fourier_lift", c.use_fourier_lift},     {"fourier_num_freqs", c.fourier_num_freqs},
       {"use_adversarial_loss", c.use_adversarial_loss}, {"base_width", c.base_width},
       {"recon_loss_weight", c.recon_loss_weight},   {"adv_loss_weight", c.adv_loss_weight},
       {"kl_or_reg_weight", c.kl_or_reg_weight}};
}

inline void from_json(const nlohmann::json& j, AEConfig& c) {
  io::read_opt(j, "latent_channels", c.latent_channels);
  io::read_opt(j, "downsample_blocks", c.downsample_blocks);
  io::read_opt(j, "use_fourier_lift", c.use_fourier_lift);
  io::read_opt(j, "fourier_num_freqs", c.fourier_num_freqs);
  io::read_opt(j, "use_adversarial_loss", c.use_adversarial_loss);
  io::read_opt(j, "base_width", c.base_width);
  io::read_opt(j, "recon_loss_weight", c.recon_loss_weight);
  io::read_opt(j, "adv_loss_weight", c.adv_loss_weight);
  io::read_opt(j, "kl_or_reg_weight", c.kl_or_reg_weight);
}

inline const std::set<std::string>& ae_config_keys() {
  static const std::set<std::string> keys{"latent_channels",   "downsample_blocks",    "use_fourier_lift",
                                          "fourier_num_freqs", "use_adversarial_loss", "base_width",
                                          "recon_loss_weight", "adv_loss_weight",      "kl_or_reg_weight"};
  return keys;
}

}  // namespace curatune::ae
