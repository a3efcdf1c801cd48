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
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "curatune/core/optim.hpp"
#include "curatune/diffusion/model.hpp"
#include "curatune/diffusion/noise.hpp"
#include "curatune/image/dataset.hpp"

namespace curatune::diffusion {

struct ResolutionStage {
  int resolution_px = 32;
  int step_budget = 1000;

  friend bool operator==(const ResolutionStage&, const ResolutionStage&) = default;
};

struct TrainConfig {
  std::vector<ResolutionStage> resolutions{{32, 1000}};
  double noise_offset = 0.02;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  TextCond text_cond;
  // Toy-scale plumbing beyond the core hyperparameters.
  std::string ae_ckpt;
  DenoiserConfig denoiser;
  int schedule_steps = 1000;
  double cond_drop_prob = 0.1;
  double grad_clip = 1.0;

  void validate() const {
    if (resolutions.empty()) throw ConfigError("resolutions must list at least one stage");
    for (std::size_t i = 0; i < resolutions.size(); ++i) {
      if (resolutions[i].step_budget < 1)
        throw ConfigError("stage " + std::to_string(i) + " has an empty step budget");
      if (i > 0 && resolutions[i].resolution_px <= resolutions[i - 1].resolution_px)
        throw ConfigError("resolutions must be strictly increasing");
    }
    if (!(noise_offset >= 0.0)) throw ConfigError("noise_offset must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (cond_drop_prob < 0.0 || cond_drop_prob > 1.0) throw ConfigError("cond_drop_prob must be in [0, 1]");
    denoiser.validate();
  }

  int total_steps() const {
    int n = 0;
    for (const auto& s : resolutions) n += s.step_budget;
    return n;
  }
};

inline void to_json(nlohmann::json& j, const ResolutionStage& s) {
  j = {{"resolution_px", s.resolution_px}, {"step_budget", s.step_budget}};
}

inline void from_json(const nlohmann::json& j, ResolutionStage& s) {
  if (j.is_array()) {
    if (j.size() != 2) throw ConfigError("resolution stage must be [resolution_px, step_budget]");
    s.resolution_px = j[0].get<int>();
    s.step_budget = j[1].get<int>();
    return;
  }
  io::check_keys(j, {"resolution_px", "step_budget"}, "resolution stage");
  io::read_opt(j, "resolution_px", s.resolution_px);
  io::read_opt(j, "step_budget", s.step_budget);
}

inline const std::set<std::string>& train_config_keys() {
  static const std::set<std::string> keys{"resolutions", "noise_offset", "batch_size",     "learning_rate",
                                          "seed",        "text_cond",    "ae_ckpt",        "denoiser",
                                          "schedule_steps", "cond_drop_prob", "grad_clip"};
  return keys;
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"resolutions", c.resolutions},       {"noise_offset", c.noise_offset},     {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},   {"seed", c.seed},                     {"text_cond", c.text_cond},
       {"ae_ckpt", c.ae_ckpt},               {"denoiser", c.denoiser},             {"schedule_steps", c.schedule_steps},
       {"cond_drop_prob", c.cond_drop_prob}, {"grad_clip", c.grad_clip}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  io::check_keys(j, train_config_keys(), "train config");
  io::read_opt(j, "resolutions", c.resolutions);
  io::read_opt(j, "noise_offset", c.noise_offset);
  io::read_opt(j, "batch_size", c.batch_size);
  io::read_opt(j, "learning_rate", c.learning_rate);
  io::read_opt(j, "seed", c.seed);
  io::read_opt(j, "text_cond", c.text_cond);
  io::read_opt(j, "ae_ckpt", c.ae_ckpt);
  io::read_opt(j, "denoiser", c.denoiser);
  io::read_opt(j, "schedule_steps", c.schedule_steps);
  io::read_opt(j, "cond_drop_prob", c.cond_drop_prob);
  io::read_opt(j, "grad_clip", c.grad_clip);
}

/// Training examples in latent space with their prompt embeddings.
struct LatentDataset {
  Tensor<float> latents;              // [M, C, h, w]
  std::vector<Tensor<float>> cond_a;  // per example [La, Da] (empty when slot A is off)
  std::vector<Tensor<float>> cond_b;

  std::size_t size() const { return latents.empty() ? 0 : static_cast<std::size_t>(latents.dim(0)); }
};

inline LatentDataset make_latent_dataset(const LatentDiffusion& model, std::span<const Image> images,
                                         std::span<const std::string> captions) {
  if (images.size() != captions.size()) throw ShapeError("one caption per image required");
  LatentDataset d;
  d.latents = model.encode_images(images);
  for (const auto& c : captions) {
    auto [a, b] = model.embed(c);
    d.cond_a.push_back(std::move(a));
    d.cond_b.push_back(std::move(b));
  }
  return d;
}

struct TrainBatch {
  Tensor<float> latents;
  Conditioning<float> cond;
};

/// Gathers rows of `data`; rows flagged in `drop` get all-zero (unconditional) embeddings.
inline TrainBatch gather_batch(const LatentDataset& data, std::span<const std::size_t> indices,
                               const std::vector<bool>& drop = {}) {
  const Shape& s = data.latents.shape();
  const std::size_t row = shape_numel(Shape(s.begin() + 1, s.end()));
  Shape bs = s;
  bs[0] = static_cast<int>(indices.size());
  TrainBatch b{Tensor<float>(bs), {}};
  std::vector<Tensor<float>> a, c;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t k = indices[i];
    if (k >= data.size()) throw ShapeError("batch index out of range");
    std::copy_n(data.latents.data() + k * row, row, b.latents.data() + i * row);
    const bool dropped = i < drop.size() && drop[i];
    if (!data.cond_a[k].empty()) a.push_back(dropped ? Tensor<float>(data.cond_a[k].shape()) : data.cond_a[k]);
    if (!data.cond_b[k].empty()) c.push_back(dropped ? Tensor<float>(data.cond_b[k].shape()) : data.cond_b[k]);
  }
  if (!a.empty()) b.cond.a = stack<float>(a);
  if (!c.empty()) b.cond.b = stack<float>(c);
  return b;
}

/// Denoising objective on a batch at caller-supplied timesteps and noise.
inline ag::Var<float> denoising_loss(const LatentDiffusion& model, const TrainBatch& batch, std::span<const int> t,
                                     double offset, Rng& rng) {
  auto noised = add_noise_with_offset(batch.latents, t, model.schedule(), offset, rng);
  ag::Var<float> pred = model.denoiser()(ag::Var<float>(noised.x_t), t, batch.cond);
  return ag::mse_loss(pred, noised.eps_target);
}

/// Stream of per-step randomness for diffusion training.
inline Rng step_rng(std::uint64_t seed, std::int64_t step) {
  return make_rng(mix64(seed, 0x7A1), static_cast<std::uint64_t>(step));
}

/// One optimizer step of epsilon-prediction training.
class DiffusionTrainer {
 public:
  DiffusionTrainer(LatentDiffusion& model, double learning_rate, double grad_clip, std::uint64_t seed)
      : model_(&model),
        adam_(model.denoiser().params(), {.learning_rate = learning_rate, .grad_clip = grad_clip}),
        seed_(seed) {}

  /// Returns the batch loss. Timesteps and noise come from (seed, step) only.
  double train_step(const TrainBatch& batch, double noise_offset, std::int64_t step) {
    if (batch.latents.rank() != 4 || batch.latents.dim(1) != model_->denoiser().config().in_channels)
      throw ShapeError("batch latents " + shape_str(batch.latents.shape()) + " do not match the denoiser channels");
    if (!batch.latents.all_finite()) throw NumericError("non-finite values in batch latents");
    Rng rng = step_rng(seed_ ^ 0x5EED, step);
    std::uniform_int_distribution<int> pick_t(0, model_->schedule().num_steps() - 1);
    std::vector<int> t(static_cast<std::size_t>(batch.latents.dim(0)));
    for (auto& ti : t) ti = pick_t(rng);
    ag::Var<float> loss = denoising_loss(*model_, batch, t, noise_offset, rng);
    const double v = loss.item();
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "diffusion loss is " << v << " at step " << step
         << "; last good checkpoint: " << (last_good_checkpoint_.empty() ? "none" : last_good_checkpoint_);
      throw NumericError(os.str());
    }
    ag::backward(loss);
    adam_.step();
    return v;
  }

  void set_last_good_checkpoint(std::string path) { last_good_checkpoint_ = std::move(path); }
  const std::string& last_good_checkpoint() const { return last_good_checkpoint_; }

 private:
  LatentDiffusion* model_;
  optim::Adam<float> adam_;
  std::uint64_t seed_;
  std::string last_good_checkpoint_;
};

struct StepLog {
  std::int64_t step = 0;
  int stage = 0;
  int resolution = 0;
  double noise_offset = 0.0;
  double loss = 0.0;
};

inline void to_json(nlohmann::json& j, const StepLog& s) {
  j = {{"step", s.step}, {"stage", s.stage}, {"resolution", s.resolution}, {"noise_offset", s.noise_offset},
       {"loss", s.loss}};
}

struct CheckpointRecord {
  int stage = 0;
  int resolution = 0;
  std::int64_t step = 0;
  std::string path;  // empty when not written to disk
};

inline void to_json(nlohmann::json& j, const CheckpointRecord& c) {
  j = {{"stage", c.stage}, {"resolution", c.resolution}, {"step", c.step}, {"path", c.path}};
}

struct PretrainOptions {
  /// When set, stage checkpoints are written here.
  std::optional<std::filesystem::path> out_dir;
  /// Called after every step; may be empty.
  std::function<void(const StepLog&)> on_step;
};

struct PretrainResult {
  std::vector<StepLog> log;
  std::vector<CheckpointRecord> checkpoints;
};

/// Progressive-resolution pre-training. Each stage resizes the dataset to its
/// resolution and re-encodes latents; config.noise_offset applies to the
/// final stage only. A checkpoint is emitted at every stage boundary.
inline PretrainResult pretrain(LatentDiffusion& model, std::span<const CaptionedImage> dataset, const TrainConfig& config,
                               const PretrainOptions& options = {}) {
  config.validate();
  if (dataset.empty()) throw DataError("pretrain: empty dataset");
  const int max_res = config.resolutions.back().resolution_px;
  for (const auto& s : config.resolutions) model.check_resolution(s.resolution_px);
  for (const auto& item : dataset)
    if (item.image.height < max_res || item.image.width < max_res)
      throw DataError("image " + item.id + " is " + std::to_string(item.image.height) + "x" +
                      std::to_string(item.image.width) + ", below the maximum stage resolution " +
                      std::to_string(max_res));

  std::vector<std::string> captions;
  for (const auto& item : dataset) captions.push_back(item.caption);
  DiffusionTrainer trainer(model, config.learning_rate, config.grad_clip, config.seed);
  PretrainResult result;
  std::int64_t step = 0;
  const int n_stages = static_cast<int>(config.resolutions.size());
  for (int st = 0; st < n_stages; ++st) {
    const auto& stage = config.resolutions[static_cast<std::size_t>(st)];
    std::vector<Image> images;
    images.reserve(dataset.size());
    for (const auto& item : dataset) images.push_back(resize_bicubic(item.image, stage.resolution_px, stage.resolution_px));
    if (st == 0) {
      // Fix the latent scale from the first stage's unscaled latents.
      model.set_latent_scale(1.0);
      const Tensor<float> raw = model.encode_images(images);
      double ss = 0.0;
      for (float v : raw.vec()) ss += static_cast<double>(v) * v;
      model.set_latent_scale(std::max(1e-6, std::sqrt(ss / static_cast<double>(raw.numel()))));
    }
    const LatentDataset data = make_latent_dataset(model, images, captions);
    model.set_resolution(stage.resolution_px);
    const double offset = st == n_stages - 1 ? config.noise_offset : 0.0;
    std::vector<std::size_t> idx(static_cast<std::size_t>(config.batch_size));
    std::vector<bool> drop(idx.size());
    for (int i = 0; i < stage.step_budget; ++i, ++step) {
      Rng rng = step_rng(config.seed, step);
      std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
      std::bernoulli_distribution drop_d(config.cond_drop_prob);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        idx[b] = pick(rng);
        drop[b] = drop_d(rng);
      }
      const double loss = trainer.train_step(gather_batch(data, idx, drop), offset, step);
      StepLog entry{step, st, stage.resolution_px, offset, loss};
      result.log.push_back(entry);
      if (options.on_step) options.on_step(entry);
    }
    CheckpointRecord rec{st, stage.resolution_px, step, ""};
    if (options.out_dir) {
      std::filesystem::create_directories(*options.out_dir);
      const auto path = *options.out_dir / ("stage" + std::to_string(st) + "_res" + std::to_string(stage.resolution_px) +
                                            "_step" + std::to_string(step) + ".ckpt");
      Archive a = model.to_archive(step);
      a.meta["train_config"] = config;
      a.save(path);
      rec.path = path.string();
      trainer.set_last_good_checkpoint(rec.path);
    }
    result.checkpoints.push_back(rec);
  }
  return result;
}

}  // namespace curatune::diffusion
