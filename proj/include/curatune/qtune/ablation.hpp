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

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curatune/eval/report.hpp"
#include "curatune/qtune/trainer.hpp"

namespace curatune::qtune {

/// Rates one side-by-side pair; returns a verdict from the task metric's
/// domain ("A", "B", "Tie" for visual appeal). `rater` is 0..required-1.
using Judge = std::function<std::string(const Image& a, const Image& b, const eval::PromptRecord& prompt, int rater)>;

/// Automatic stand-in judge for pipeline tests: prefers the side with higher
/// RMS contrast when the gap exceeds a per-rater margin, otherwise Tie.
inline Judge contrast_judge(double margin = 0.01) {
  return [margin](const Image& a, const Image& b, const eval::PromptRecord&, int rater) -> std::string {
    const double m = margin * (1.0 + 0.25 * rater);
    const double d = rms_contrast(a) - rms_contrast(b);
    if (d > m) return "A";
    if (d < -m) return "B";
    return "Tie";
  };
}

struct AblationArm {
  int subset_size = 0;
  QTuneReport tune;
  eval::EvalReport report;
  /// Visual-appeal counts over all prompts of the arm (tuned = X vs pretrained = Y).
  eval::SliceReport overall;
};

struct AblationResult {
  std::vector<std::vector<std::size_t>> subsets;
  std::vector<AblationArm> arms;
};

inline void to_json(nlohmann::json& j, const AblationResult& r) {
  j = nlohmann::json::object();
  j["arms"] = nlohmann::json::array();
  for (const auto& a : r.arms)
    j["arms"].push_back({{"subset_size", a.subset_size},
                         {"steps_run", a.tune.steps_run},
                         {"stop_reason", a.tune.stop_reason},
                         {"overall", a.overall},
                         {"report", a.report}});
  std::vector<std::size_t> sizes;
  for (const auto& s : r.subsets) sizes.push_back(s.size());
  j["subset_sizes"] = sizes;
}

struct AblationSpec {
  std::vector<int> sizes{100, 1000, 2000};
  QTuneConfig config;  // subset_size is set per arm
  std::uint64_t sample_seed = 0;
  std::uint64_t task_seed = 0;
};

/// Dataset-size ablation: for each size, a fresh pre-trained backbone is tuned
/// on the nested subset of `quality_pool`, samples are generated for
/// `prompts`, and each pair (tuned vs pre-trained, same prompt and sample seed)
/// is rated by `judge` under the visual-appeal protocol.
inline AblationResult run_subset_ablation(const std::function<std::unique_ptr<QTuneBackbone>()>& load_pretrained,
                                          std::span<const QualityExample> quality_pool,
                                          const std::vector<eval::PromptRecord>& prompts, const Judge& judge,
                                          const AblationSpec& spec) {
  if (prompts.empty()) throw DataError("run_subset_ablation: no prompts");
  AblationResult out;
  out.subsets = make_ablation_subsets(quality_pool.size(), spec.sizes, spec.config.seed);

  std::vector<std::string> texts;
  for (const auto& p : prompts) texts.push_back(p.text);
  auto base = load_pretrained();
  const auto base_images = base->sample(texts, spec.sample_seed);
  base.reset();

  const eval::ModelPair models{"tuned", "pretrained"};
  for (int size : spec.sizes) {
    AblationArm arm;
    arm.subset_size = size;
    auto backbone = load_pretrained();
    QTuneConfig cfg = spec.config;
    cfg.subset_size = size;
    arm.tune = quality_tune(*backbone, quality_pool, cfg);
    const auto tuned_images = backbone->sample(texts, spec.sample_seed);

    std::map<std::string, std::string> xi, yi;
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      xi[prompts[i].id] = "tuned:" + std::to_string(i);
      yi[prompts[i].id] = "pretrained:" + std::to_string(i);
      pos[prompts[i].id] = i;
    }
    const auto tasks = eval::build_task_set(prompts, xi, yi, eval::Metric::VisualAppeal, spec.task_seed, models);
    std::vector<eval::PreferenceJudgment> log;
    for (const auto& t : tasks) {
      const std::size_t i = pos.at(t.prompt_id);
      const bool a_tuned = t.assignment.model_a == models.x;
      const Image& a = a_tuned ? tuned_images[i] : base_images[i];
      const Image& b = a_tuned ? base_images[i] : tuned_images[i];
      for (int r = 0; r < t.required; ++r)
        log.push_back({t.task_id, "judge-" + std::to_string(r), judge(a, b, prompts[i], r), ""});
    }
    arm.report = eval::report_from_log(tasks, prompts, log, models, {eval::kSliceAll});
    std::vector<eval::TaskOutcome> outcomes;
    std::map<std::string, std::vector<eval::PreferenceJudgment>> by_task;
    for (const auto& j : log) by_task[j.task_id].push_back(j);
    for (const auto& t : tasks) {
      const auto tally = eval::aggregate_task(t, by_task[t.task_id], models.x);
      outcomes.push_back({t.task_id, "", t.metric, false, *tally.outcome, tally.votes_x, tally.votes_y, tally.votes_tie});
    }
    std::vector<const eval::TaskOutcome*> ptrs;
    for (const auto& o : outcomes) ptrs.push_back(&o);
    arm.overall = eval::summarize(ptrs, "all-prompts", eval::Metric::VisualAppeal, eval::kSliceAll);
    out.arms.push_back(std::move(arm));
  }
  return out;
}

}  // namespace curatune::qtune
