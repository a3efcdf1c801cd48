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
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curatune/autoencoder/model.hpp"
#include "curatune/core/optim.hpp"

namespace curatune::ae {

struct AETrainOptions {
  int steps = 1000;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  /// Fraction of steps before the adversarial term switches on.
  double adv_start_fraction = 0.5;
};

struct AELossLogEntry {
  int step = 0;
  double recon = 0;
  double kl = 0;
  double total = 0;
  std::optional<double> generator_adv;
  std::optional<double> discriminator;
};

inline void to_json(nlohmann::json& j, const AELossLogEntry& e) {
  j = {{"step", e.step}, {"recon", e.recon}, {"kl", e.kl}, {"total", e.total}};
  if (e.generator_adv) j["g_adv"] = *e.generator_adv;
  if (e.discriminator) j["d_loss"] = *e.discriminator;
}

/// Patch discriminator producing a map of real/fake logits.
template <class T>
class PatchDiscriminator {
 public:
  explicit PatchDiscriminator(int width, std::uint64_t seed) {
    Rng rng = make_rng(seed, 0xD15C);
    c1_ = nn::Conv2d<T>(params_, "d.c1", 3, width, 3, 2, rng);
    c2_ = nn::Conv2d<T>(params_, "d.c2", width, 2 * width, 3, 2, rng);
    c3_ = nn::Conv2d<T>(params_, "d.c3", 2 * width, 1, 3, 1, rng);
  }

  Var<T> operator()(const Var<T>& x) const {
    Var<T> h = ag::leaky_relu(c1_(x));
    h = ag::leaky_relu(c2_(h));
    return c3_(h);
  }

  nn::ParamSet<T>& params() { return params_; }

 private:
  nn::ParamSet<T> params_;
  nn::Conv2d<T> c1_, c2_, c3_;
};

template <class T>
struct AELossTerms {
  Var<T> reconstruction;  // decoder output, unclamped
  Var<T> recon;           // MSE
  Var<T> kl;              // mean KL to N(0, I) per latent element
  Var<T> total;           // weighted recon + kl (adversarial term added by the trainer)
};

/// Reconstruction and latent-regularisation losses. The reparameterisation
/// noise is drawn from `rng`, so identical rng state gives an identical loss.
template <class T>
AELossTerms<T> ae_losses(const Autoencoder<T>& model, const Tensor<T>& images, Rng& rng) {
  const auto& cfg = model.config();
  Var<T> x(images);
  auto post = model.encode_posterior(x);
  Tensor<T> eps(post.mean.shape());
  fill_normal(eps, rng);
  Var<T> z = ag::add(post.mean, ag::mul(ag::exp(ag::scale(post.logvar, T(0.5))), Var<T>(std::move(eps))));
  Var<T> recon_img = model.decode_graph(z);
  Var<T> recon = ag::mse_loss(recon_img, images);
  Var<T> kl = ag::scale(ag::mean(ag::sub(ag::add_scalar(ag::add(ag::square(post.mean), ag::exp(post.logvar)), T(-1)),
                                         post.logvar)),
                        T(0.5));
  Var<T> total = ag::add(ag::scale(recon, static_cast<T>(cfg.recon_loss_weight)),
                         ag::scale(kl, static_cast<T>(cfg.kl_or_reg_weight)));
  return {recon_img, recon, kl, total};
}

template <class T>
struct AETrainResult {
  Autoencoder<T> model;
  std::vector<AELossLogEntry> log;
};

inline void check_finite_loss(double v, int step, const char* what) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "training diverged: " << what << " loss is " << v << " at step " << step;
    throw NumericError(os.str());
  }
}

/// Trains an autoencoder on `dataset`. Batches are drawn with replacement
/// from a per-step rng stream, so results depend only on (seed, step).
template <class T>
AETrainResult<T> train_ae(std::span<const Image> dataset, const AEConfig& config, const AETrainOptions& opt) {
  if (dataset.empty()) throw DataError("train_ae: empty dataset");
  if (opt.steps < 1) throw ConfigError("train_ae: steps must be >= 1");
  if (opt.batch_size < 1) throw ConfigError("train_ae: batch_size must be >= 1");
  Autoencoder<T> model(config, opt.seed);
  optim::Adam<T> adam(model.params(), {.learning_rate = opt.learning_rate});
  std::optional<PatchDiscriminator<T>> disc;
  std::optional<optim::Adam<T>> disc_adam;
  if (config.use_adversarial_loss) {
    disc.emplace(std::max(4, config.base_width / 2), opt.seed);
    disc_adam.emplace(disc->params(), optim::AdamOptions{.learning_rate = opt.learning_rate});
  }
  const int adv_start = static_cast<int>(std::ceil(opt.adv_start_fraction * opt.steps));
  std::vector<AELossLogEntry> log;
  log.reserve(static_cast<std::size_t>(opt.steps));
  std::vector<Image> batch(static_cast<std::size_t>(opt.batch_size));
  for (int step = 0; step < opt.steps; ++step) {
    Rng rng = make_rng(opt.seed, static_cast<std::uint64_t>(step) + 1);
    std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
    for (auto& b : batch) b = dataset[pick(rng)];
    const Tensor<T> x = images_to_tensor<T>(batch);
    auto terms = ae_losses(model, x, rng);
    AELossLogEntry entry{step, terms.recon.item(), terms.kl.item(), 0.0, std::nullopt, std::nullopt};
    Var<T> total = terms.total;
    const bool adv = disc && step >= adv_start;
    if (adv) {
      Var<T> g_adv = ag::scale(ag::mean((*disc)(terms.reconstruction)), T(-1));
      entry.generator_adv = g_adv.item();
      total = ag::add(total, ag::scale(g_adv, static_cast<T>(config.adv_loss_weight)));
    }
    entry.total = total.item();
    check_finite_loss(entry.total, step, "autoencoder");
    ag::backward(total);
    adam.step();
    if (adv) {
      disc->params().zero_grad();
      Var<T> real = (*disc)(Var<T>(x));
      Var<T> fake = (*disc)(Var<T>(terms.reconstruction.value()));
      Var<T> d_loss = ag::add(ag::mean(ag::relu(ag::add_scalar(ag::scale(real, T(-1)), T(1)))),
                              ag::mean(ag::relu(ag::add_scalar(fake, T(1)))));
      entry.discriminator = d_loss.item();
      check_finite_loss(*entry.discriminator, step, "discriminator");
      ag::backward(d_loss);
      disc_adam->step();
    }
    log.push_back(entry);
  }
  return {std::move(model), std::move(log)};
}

}  // namespace curatune::ae
