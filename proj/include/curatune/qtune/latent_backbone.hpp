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

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curatune/diffusion/sampler.hpp"
#include "curatune/diffusion/trainer.hpp"
#include "curatune/qtune/backbone.hpp"

namespace curatune::qtune {

/// QTuneBackbone over the latent-diffusion model. Latents and prompt embeddings
/// of quality examples are cached by id, so each image is encoded once.
class LatentDiffusionBackbone final : public QTuneBackbone {
 public:
  LatentDiffusionBackbone() = default;
  explicit LatentDiffusionBackbone(diffusion::LatentDiffusion model) : model_(std::move(model)) {}

  bool ready() const override { return model_.has_value(); }

  void prepare(const QTuneConfig& config) override {
    require_ready();
    trainer_.emplace(*model_, config.learning_rate, 1.0, config.seed);
    cond_drop_prob_ = config.cond_drop_prob;
    seed_ = config.seed;
  }

  double train_step(std::span<const QualityExample> batch, double noise_offset, std::int64_t step) override {
    require_ready();
    if (!trainer_) throw StateError("train_step called before prepare");
    Rng rng = make_rng(mix64(seed_, 0xB0D5), static_cast<std::uint64_t>(step));
    std::bernoulli_distribution drop(cond_drop_prob_);
    std::vector<bool> dropped(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) dropped[i] = drop(rng);
    return trainer_->train_step(assemble(batch, dropped), noise_offset, step);
  }

  double validation_loss(std::span<const QualityExample> holdout, std::uint64_t seed) override {
    require_ready();
    if (holdout.empty()) return 0.0;
    ag::NoGradGuard guard;
    const diffusion::TrainBatch b = assemble(holdout, {});
    const int T = model_->schedule().num_steps();
    constexpr int kLevels = 4;
    double total = 0.0;
    for (int level = 0; level < kLevels; ++level) {
      std::vector<int> t(holdout.size(), (2 * level + 1) * T / (2 * kLevels));
      Rng rng = make_rng(seed, static_cast<std::uint64_t>(level));
      total += diffusion::denoising_loss(*model_, b, t, val_offset_, rng).item();
    }
    return total / kLevels;
  }

  std::vector<Image> sample(std::span<const std::string> prompts, std::uint64_t seed) override {
    require_ready();
    diffusion::SampleOptions opt = sample_options_;
    opt.seed = seed;
    return diffusion::sample(*model_, prompts, opt);
  }

  void save(const std::filesystem::path& path) const override {
    require_ready();
    model_->to_archive(0).save(path);
  }

  void load(const std::filesystem::path& path) override {
    model_.emplace(diffusion::LatentDiffusion::from_archive(Archive::load(path)));
    trainer_.reset();
    cache_.clear();
  }

  diffusion::LatentDiffusion& model() {
    require_ready();
    return *model_;
  }
  diffusion::SampleOptions& sample_options() { return sample_options_; }

 private:
  void require_ready() const {
    if (!model_) throw StateError("latent-diffusion backbone has no loaded checkpoint");
  }

  struct Cached {
    Tensor<float> latent;  // [C, h, w]
    Tensor<float> a, b;
  };

  const Cached& cached(const QualityExample& ex) {
    auto it = cache_.find(ex.id);
    if (it != cache_.end()) return it->second;
    const int res = model_->resolution();
    Image img = res > 0 ? resize_bicubic(ex.image, res, res) : ex.image;
    Tensor<float> z = model_->encode_images(std::span<const Image>(&img, 1));
    auto [a, b] = model_->embed(ex.caption);
    return cache_.emplace(ex.id, Cached{slice_batch(z, 0), std::move(a), std::move(b)}).first->second;
  }

  diffusion::TrainBatch assemble(std::span<const QualityExample> batch, const std::vector<bool>& dropped) {
    diffusion::LatentDataset d;
    std::vector<Tensor<float>> zs;
    for (const auto& ex : batch) {
      const Cached& c = cached(ex);
      zs.push_back(c.latent);
      d.cond_a.push_back(c.a);
      d.cond_b.push_back(c.b);
    }
    d.latents = stack<float>(zs);
    std::vector<std::size_t> idx(batch.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return diffusion::gather_batch(d, idx, dropped);
  }

  std::optional<diffusion::LatentDiffusion> model_;
  std::optional<diffusion::DiffusionTrainer> trainer_;
  std::map<std::string, Cached> cache_;
  diffusion::SampleOptions sample_options_;
  double cond_drop_prob_ = 0.1;
  double val_offset_ = 0.0;
  std::uint64_t seed_ = 0;
};

}  // namespace curatune::qtune
