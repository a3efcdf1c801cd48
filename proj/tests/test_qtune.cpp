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

#include <gtest/gtest.h>

#include <set>

#include "curatune/image/synthetic.hpp"
#include "curatune/qtune/ablation.hpp"
#include "curatune/qtune/latent_backbone.hpp"
#include "support.hpp"

using namespace curatune;
using namespace curatune::qtune;

namespace {

std::vector<QualityExample> examples(std::size_t n, int size = 8) {
  std::vector<QualityExample> out;
  for (const auto& s : synth::make_dataset(21, n, {.size = size}))
    out.push_back({"q-" + std::to_string(out.size()), s.image, s.caption});
  return out;
}

/// Scripted backbone that records the call protocol.
class MockBackbone final : public QTuneBackbone {
 public:
  bool loaded = true;
  bool prepared = false;
  std::vector<double> val_script;  // successive validation losses (last repeats)
  std::vector<double> stat_script;
  std::vector<std::string> calls;
  std::set<std::string> trained_ids;
  std::set<std::string> validated_ids;
  std::vector<double> offsets;
  std::size_t batch_size_seen = 0;
  int steps = 0;

  bool ready() const override { return loaded; }
  void prepare(const QTuneConfig&) override {
    prepared = true;
    calls.push_back("prepare");
  }
  double train_step(std::span<const QualityExample> batch, double offset, std::int64_t step) override {
    if (!prepared) throw StateError("train_step before prepare");
    EXPECT_EQ(step, steps);
    for (const auto& e : batch) trained_ids.insert(e.id);
    offsets.push_back(offset);
    batch_size_seen = batch.size();
    ++steps;
    return 1.0 / steps;
  }
  double validation_loss(std::span<const QualityExample> holdout, std::uint64_t) override {
    for (const auto& e : holdout) validated_ids.insert(e.id);
    calls.push_back("val");
    const std::size_t i = std::min(n_val_++, val_script.size() - 1);
    return val_script.empty() ? 1.0 : val_script[i];
  }
  std::optional<double> sample_statistic(std::uint64_t) override {
    if (stat_script.empty()) return std::nullopt;
    return stat_script[std::min(n_stat_++, stat_script.size() - 1)];
  }
  std::vector<Image> sample(std::span<const std::string> prompts, std::uint64_t) override {
    // Contrast grows with the number of tuning steps taken.
    std::vector<Image> out;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      Image img(4, 4, 0.0f);
      const float amp = std::min(0.9f, 0.1f + 0.001f * static_cast<float>(steps));
      for (std::size_t k = 0; k < img.data.size(); ++k) img.data[k] = (k % 2) ? amp : -amp;
      out.push_back(std::move(img));
    }
    return out;
  }
  void save(const std::filesystem::path&) const override {}
  void load(const std::filesystem::path&) override { loaded = true; }

 private:
  std::size_t n_val_ = 0;
  std::size_t n_stat_ = 0;
};

QTuneConfig fast_config() {
  QTuneConfig c;
  c.batch_size = 4;
  c.max_iterations = 50;
  c.eval_every = 0;
  c.early_stop_patience = 0;
  c.learning_rate = 1e-3;
  return c;
}

}  // namespace

TEST(Subsets, NestedDeterministicAndSorted) {
  const std::vector<int> sizes{100, 1000, 2000};
  const auto s = make_ablation_subsets(5000, sizes, 7);
  ASSERT_EQ(s.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(s[k].size(), static_cast<std::size_t>(sizes[k]));
    EXPECT_TRUE(std::is_sorted(s[k].begin(), s[k].end()));
    EXPECT_EQ(std::set<std::size_t>(s[k].begin(), s[k].end()).size(), s[k].size());
  }
  EXPECT_TRUE(std::includes(s[1].begin(), s[1].end(), s[0].begin(), s[0].end()));
  EXPECT_TRUE(std::includes(s[2].begin(), s[2].end(), s[1].begin(), s[1].end()));
  EXPECT_EQ(make_ablation_subsets(5000, sizes, 7), s);
  EXPECT_NE(make_ablation_subsets(5000, sizes, 8), s);
  // A single-size request yields the same prefix as the joint request.
  const int one[1] = {1000};
  EXPECT_EQ(make_ablation_subsets(5000, one, 7).front(), s[1]);
  const std::vector<int> desc{10, 5};
  EXPECT_THROW(make_ablation_subsets(100, desc, 0), ConfigError);
  EXPECT_THROW(make_ablation_subsets(100, sizes, 0), DataError);
}

TEST(EarlyStop, CapAndPatience) {
  QTuneConfig c;
  c.max_iterations = 10;
  c.early_stop_patience = 2;
  const std::vector<double> improving{3, 2, 1};
  const std::vector<double> stalled{3, 1, 2, 2};
  EXPECT_EQ(check_early_stop(10, improving, c).reason, "cap");
  EXPECT_FALSE(check_early_stop(5, improving, c).stop);
  EXPECT_EQ(check_early_stop(5, stalled, c).reason, "patience");
  c.early_stop_patience = 0;
  EXPECT_FALSE(check_early_stop(5, stalled, c).stop);
}

TEST(Config, CapIsEnforcedUnlessOverridden) {
  QTuneConfig c;
  EXPECT_EQ(c.max_iterations, kIterationCap);
  EXPECT_NO_THROW(c.validate());
  c.max_iterations = kIterationCap + 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c.allow_exceeding_cap = true;
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(nlohmann::json({{"max_iters", 3}}).get<QTuneConfig>(), ConfigError);
  const auto parsed = nlohmann::json({{"subset_size", 100}, {"max_iterations", 20}}).get<QTuneConfig>();
  EXPECT_EQ(parsed.subset_size, 100);
  EXPECT_EQ(parsed.max_iterations, 20);
}

TEST(QualityTune, DefaultRunStopsAtTheCap) {
  MockBackbone m;
  QTuneConfig c = fast_config();
  c.max_iterations = kIterationCap;
  c.batch_size = 1;
  const auto data = examples(30);
  const auto r = quality_tune(m, data, c);
  EXPECT_EQ(r.steps_run, kIterationCap);
  EXPECT_EQ(r.stop_reason, "cap");
  EXPECT_EQ(m.steps, kIterationCap);
  EXPECT_EQ(r.loss_curve.size(), static_cast<std::size_t>(kIterationCap));
}

TEST(QualityTune, PatienceStopsOnStalledProxy) {
  MockBackbone m;
  m.val_script = {1.0, 0.9, 0.95, 0.97, 0.99, 1.2};
  QTuneConfig c = fast_config();
  c.max_iterations = 1000;
  c.eval_every = 10;
  c.early_stop_patience = 3;
  const auto r = quality_tune(m, examples(40), c);
  EXPECT_EQ(r.stop_reason, "patience");
  EXPECT_EQ(r.steps_run, 40);  // best at step 10, three non-improving evals after it
  ASSERT_EQ(r.evals.size(), 5u);
  EXPECT_EQ(r.evals.front().step, 0);
}

TEST(QualityTune, DriftGuardCountsAsWorsening) {
  MockBackbone m;
  m.val_script = {1.0, 0.5, 0.4, 0.3, 0.2};  // keeps improving
  m.stat_script = {0.0, 0.0, 0.0, 5.0, 5.0};  // but the generations drift after step 10
  QTuneConfig c = fast_config();
  c.max_iterations = 1000;
  c.eval_every = 10;
  c.early_stop_patience = 2;
  c.drift_tolerance = 1.0;
  const auto r = quality_tune(m, examples(40), c);
  EXPECT_EQ(r.stop_reason, "patience");
  EXPECT_EQ(r.steps_run, 30);
}

TEST(QualityTune, SubsetHoldoutAndProtocol) {
  MockBackbone m;
  const auto data = examples(200);
  QTuneConfig c = fast_config();
  c.subset_size = 100;
  c.eval_every = 25;
  c.noise_offset = 0.07;
  const auto r = quality_tune(m, data, c);
  EXPECT_EQ(r.subset_size, 100);
  EXPECT_EQ(r.holdout_size, 5);
  EXPECT_EQ(r.train_size, 95);
  EXPECT_EQ(m.calls.front(), "prepare");
  EXPECT_EQ(m.batch_size_seen, 4u);
  for (double o : m.offsets) EXPECT_EQ(o, 0.07);
  const int one[1] = {100};
  const auto subset = make_ablation_subsets(data.size(), one, c.seed).front();
  std::set<std::string> allowed;
  for (auto i : subset) allowed.insert(data[i].id);
  for (const auto& id : m.trained_ids) EXPECT_TRUE(allowed.count(id)) << id;
  for (const auto& id : m.validated_ids) {
    EXPECT_TRUE(allowed.count(id));
    EXPECT_FALSE(m.trained_ids.count(id)) << "holdout example " << id << " was trained on";
  }
  c.subset_size = 500;
  EXPECT_THROW(quality_tune(m, data, c), ConfigError);
}

TEST(QualityTune, HooksAndErrors) {
  MockBackbone m;
  QTuneConfig c = fast_config();
  c.max_iterations = 20;
  c.grid_every = 5;
  std::vector<std::int64_t> grids;
  int step_calls = 0;
  QTuneHooks hooks{[&](std::int64_t s, QTuneBackbone&) { grids.push_back(s); }, [&](const StepRecord&) { ++step_calls; }};
  quality_tune(m, examples(10), c, hooks);
  EXPECT_EQ(grids, (std::vector<std::int64_t>{5, 10, 15, 20}));
  EXPECT_EQ(step_calls, 20);
  MockBackbone unloaded;
  unloaded.loaded = false;
  EXPECT_THROW(quality_tune(unloaded, examples(10), c), StateError);
  EXPECT_THROW(quality_tune(m, std::vector<QualityExample>{}, c), DataError);
  c.max_iterations = 0;
  const auto r = quality_tune(m, examples(10), c);
  EXPECT_EQ(r.steps_run, 0);
  EXPECT_EQ(r.stop_reason, "cap");
}

TEST(LatentBackbone, ConformanceAndDeterminism) {
  LatentDiffusionBackbone empty;
  EXPECT_FALSE(empty.ready());
  EXPECT_THROW(quality_tune(empty, examples(10), fast_config()), StateError);

  ae::AEConfig ac;
  ac.downsample_blocks = 1;
  ac.base_width = 8;
  diffusion::DenoiserConfig dc;
  dc.base_channels = 8;
  dc.cond_dim_a = dc.cond_dim_b = 8;
  const auto dir = testutil::scratch_dir("latent_backbone");
  {
    diffusion::LatentDiffusion model(ae::Autoencoder<float>(ac, 1), dc, {}, 100, 2);
    model.set_resolution(8);
    model.to_archive(0).save(dir / "pre.ckpt");
  }
  auto run = [&](const std::filesystem::path& out) {
    LatentDiffusionBackbone b;
    b.load(dir / "pre.ckpt");
    QTuneConfig c = fast_config();
    c.max_iterations = 6;
    c.eval_every = 3;
    const auto r = quality_tune(b, examples(24), c);
    b.save(out);
    return nlohmann::json(r).dump();
  };
  const auto r1 = run(dir / "a.ckpt");
  const auto r2 = run(dir / "b.ckpt");
  EXPECT_EQ(r1, r2);
  EXPECT_EQ(io::read_text(dir / "a.ckpt"), io::read_text(dir / "b.ckpt"));
  EXPECT_NE(io::read_text(dir / "a.ckpt"), io::read_text(dir / "pre.ckpt"));
  LatentDiffusionBackbone reloaded;
  reloaded.load(dir / "a.ckpt");
  reloaded.sample_options().steps = 3;
  const std::vector<std::string> p{"a red circle"};
  EXPECT_EQ(reloaded.sample(p, 1).size(), 1u);
}

TEST(Ablation, HarnessProducesOneArmPerNestedSubset) {
  const auto pool = examples(300);
  const auto prompts = eval::generate_oui_like_prompts(30, 3);
  AblationSpec spec;
  spec.sizes = {10, 50, 100};
  spec.config = fast_config();
  spec.config.max_iterations = 40;
  const auto res = run_subset_ablation([] { return std::make_unique<MockBackbone>(); }, pool, prompts,
                                       contrast_judge(), spec);
  ASSERT_EQ(res.arms.size(), 3u);
  EXPECT_TRUE(std::includes(res.subsets[2].begin(), res.subsets[2].end(), res.subsets[0].begin(), res.subsets[0].end()));
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& a = res.arms[k];
    EXPECT_EQ(a.subset_size, spec.sizes[k]);
    EXPECT_EQ(a.tune.subset_size, spec.sizes[k]);
    EXPECT_EQ(a.overall.n_tasks, 30);
    EXPECT_EQ(a.overall.wins, 30);  // the mock's tuned samples always have more contrast
  }
  const auto j = nlohmann::json(res);
  EXPECT_EQ(j["subset_sizes"], nlohmann::json({10, 50, 100}));
}

TEST(Judge, ContrastJudgeMarginsAndTies) {
  const auto judge = contrast_judge(0.05);
  Image flat(4, 4, 0.0f), busy(4, 4, 0.0f);
  for (std::size_t k = 0; k < busy.data.size(); ++k) busy.data[k] = (k % 2) ? 0.5f : -0.5f;
  const eval::PromptRecord p{"p", "t", eval::kSourceOui, "people", false};
  EXPECT_EQ(judge(busy, flat, p, 0), "A");
  EXPECT_EQ(judge(flat, busy, p, 4), "B");
  EXPECT_EQ(judge(flat, flat, p, 2), "Tie");
}
