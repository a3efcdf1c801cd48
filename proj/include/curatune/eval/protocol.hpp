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
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curatune/core/error.hpp"
#include "curatune/core/random.hpp"
#include "curatune/eval/prompts.hpp"

namespace curatune::eval {

enum class Metric { VisualAppeal, TextFaithfulness };

inline const char* metric_name(Metric m) {
  return m == Metric::VisualAppeal ? "visual_appeal" : "text_faithfulness";
}

inline Metric parse_metric(const std::string& s) {
  if (s == "visual_appeal") return Metric::VisualAppeal;
  if (s == "text_faithfulness") return Metric::TextFaithfulness;
  throw DataError("unknown metric '" + s + "' (expected visual_appeal or text_faithfulness)");
}

/// Raters per task: five for visual appeal, three for text faithfulness.
inline int required_judgments(Metric m) { return m == Metric::VisualAppeal ? 5 : 3; }

inline bool verdict_allowed(Metric m, const std::string& v) {
  if (v == "A" || v == "B") return true;
  return m == Metric::VisualAppeal ? v == "Tie" : (v == "Both" || v == "Neither");
}

/// Hidden side of a task: which model produced which side.
struct ModelAssignment {
  std::string model_a;
  std::string model_b;
  std::string image_a;  // underlying image reference (never shown to annotators)
  std::string image_b;

  friend bool operator==(const ModelAssignment&, const ModelAssignment&) = default;
};

struct ComparisonTask {
  std::string task_id;
  std::string prompt_id;
  Metric metric = Metric::VisualAppeal;
  int required = 5;
  /// Shown only for text faithfulness.
  std::string caption;
  ModelAssignment assignment;

  friend bool operator==(const ComparisonTask&, const ComparisonTask&) = default;
};

/// Annotator-visible payload. Contains no model identifier and no underlying
/// image path; images are fetched through opaque per-side URLs.
inline nlohmann::json visible_payload(const ComparisonTask& t) {
  nlohmann::json j = {{"task_id", t.task_id},
                      {"prompt_id", t.prompt_id},
                      {"metric", metric_name(t.metric)},
                      {"image_a", "/eval/tasks/" + t.task_id + "/image/a"},
                      {"image_b", "/eval/tasks/" + t.task_id + "/image/b"},
                      {"required_judgments", t.required}};
  if (t.metric == Metric::TextFaithfulness) j["caption"] = t.caption;
  return j;
}

inline ComparisonTask task_from_payload(const nlohmann::json& j) {
  try {
    ComparisonTask t;
    t.task_id = j.at("task_id").get<std::string>();
    t.prompt_id = j.at("prompt_id").get<std::string>();
    t.metric = parse_metric(j.at("metric").get<std::string>());
    t.required = j.at("required_judgments").get<int>();
    t.caption = j.value("caption", std::string{});
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed task row: ") + e.what());
  }
}

inline nlohmann::json assignment_row(const ComparisonTask& t) {
  return {{"task_id", t.task_id},
          {"A", {{"model", t.assignment.model_a}, {"image", t.assignment.image_a}}},
          {"B", {{"model", t.assignment.model_b}, {"image", t.assignment.image_b}}}};
}

inline std::pair<std::string, ModelAssignment> assignment_from_row(const nlohmann::json& j) {
  try {
    return {j.at("task_id").get<std::string>(),
            {j.at("A").at("model").get<std::string>(), j.at("B").at("model").get<std::string>(),
             j.at("A").at("image").get<std::string>(), j.at("B").at("image").get<std::string>()}};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed assignment row: ") + e.what());
  }
}

/// Stable task id; one task per prompt per metric.
inline std::string make_task_id(Metric m, const std::string& prompt_id) {
  return std::string(m == Metric::VisualAppeal ? "va-" : "tf-") + prompt_id;
}

/// Names the two compared systems; X is the system under test.
struct ModelPair {
  std::string x = "model_x";
  std::string y = "model_y";
};

/// One task per prompt; the side shown as A is chosen per task from a seeded
/// hash of the task id. Throws DataError on duplicate prompt ids, invalid
/// prompts, or a prompt lacking an image from either model (or an image for a
/// prompt outside the set).
inline std::vector<ComparisonTask> build_task_set(const std::vector<PromptRecord>& prompts,
                                                  const std::map<std::string, std::string>& x_images,
                                                  const std::map<std::string, std::string>& y_images, Metric metric,
                                                  std::uint64_t seed, const ModelPair& models = {}) {
  if (models.x == models.y) throw ConfigError("the two compared models need distinct names");
  std::set<std::string> ids;
  for (const auto& p : prompts) {
    validate_prompt(p);
    if (!ids.insert(p.id).second) throw DataError("duplicate prompt id " + p.id);
    if (!x_images.count(p.id)) throw DataError("missing image for prompt " + p.id + " from " + models.x);
    if (!y_images.count(p.id)) throw DataError("missing image for prompt " + p.id + " from " + models.y);
  }
  for (const auto* m : {&x_images, &y_images})
    for (const auto& [pid, _] : *m)
      if (!ids.count(pid)) throw DataError("image supplied for prompt " + pid + " which is not in the prompt set");

  std::vector<ComparisonTask> tasks;
  tasks.reserve(prompts.size());
  for (const auto& p : prompts) {
    ComparisonTask t;
    t.task_id = make_task_id(metric, p.id);
    t.prompt_id = p.id;
    t.metric = metric;
    t.required = required_judgments(metric);
    if (metric == Metric::TextFaithfulness) t.caption = p.text;
    const bool a_is_x = (hash_string(t.task_id, seed) & 1ULL) == 0;
    const auto& xi = x_images.at(p.id);
    const auto& yi = y_images.at(p.id);
    t.assignment = a_is_x ? ModelAssignment{models.x, models.y, xi, yi} : ModelAssignment{models.y, models.x, yi, xi};
    tasks.push_back(std::move(t));
  }
  std::sort(tasks.begin(), tasks.end(), [](const auto& a, const auto& b) { return a.task_id < b.task_id; });
  return tasks;
}

struct PreferenceJudgment {
  std::string task_id;
  std::string annotator_id;
  std::string verdict;
  std::string ts;

  friend bool operator==(const PreferenceJudgment&, const PreferenceJudgment&) = default;
};

inline void to_json(nlohmann::json& j, const PreferenceJudgment& p) {
  j = {{"task_id", p.task_id}, {"annotator_id", p.annotator_id}, {"verdict", p.verdict}, {"ts", p.ts}};
}

inline void from_json(const nlohmann::json& j, PreferenceJudgment& p) {
  try {
    p.task_id = j.at("task_id").get<std::string>();
    p.annotator_id = j.at("annotator_id").get<std::string>();
    p.verdict = j.at("verdict").get<std::string>();
    p.ts = j.value("ts", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed judgment: ") + e.what());
  }
}

enum class Outcome { XWins, YWins, Tie };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::XWins: return "X_wins";
    case Outcome::YWins: return "Y_wins";
    case Outcome::Tie: return "Tie";
  }
  return "?";
}

/// Per-task vote tally in model terms, plus the aggregated outcome (nullopt
/// while the task is pending).
struct TaskTally {
  int votes_x = 0;
  int votes_y = 0;
  int votes_tie = 0;
  std::optional<Outcome> outcome;
};

/// Both/Neither map to Tie; plurality over {A, B, Tie}; a plurality tie yields
/// Tie; the winning side is translated through the assignment to X or Y.
/// Fewer or more judgments than required leave the task pending.
inline TaskTally aggregate_task(const ComparisonTask& task, const std::vector<PreferenceJudgment>& judgments,
                                const std::string& model_x) {
  if (task.assignment.model_a != model_x && task.assignment.model_b != model_x)
    throw DataError("task " + task.task_id + " does not involve model " + model_x);
  int a = 0, b = 0, tie = 0;
  std::set<std::string> annotators;
  for (const auto& j : judgments) {
    if (j.task_id != task.task_id) throw DataError("judgment for " + j.task_id + " passed to task " + task.task_id);
    if (!verdict_allowed(task.metric, j.verdict))
      throw DataError("verdict '" + j.verdict + "' not allowed for " + metric_name(task.metric));
    if (!annotators.insert(j.annotator_id).second)
      throw DataError("annotator " + j.annotator_id + " judged task " + task.task_id + " twice");
    if (j.verdict == "A") ++a;
    else if (j.verdict == "B") ++b;
    else ++tie;  // Tie, Both, Neither
  }
  const bool a_is_x = task.assignment.model_a == model_x;
  TaskTally t;
  t.votes_x = a_is_x ? a : b;
  t.votes_y = a_is_x ? b : a;
  t.votes_tie = tie;
  if (static_cast<int>(judgments.size()) != task.required) return t;
  if (t.votes_x > t.votes_y && t.votes_x > t.votes_tie) t.outcome = Outcome::XWins;
  else if (t.votes_y > t.votes_x && t.votes_y > t.votes_tie) t.outcome = Outcome::YWins;
  else t.outcome = Outcome::Tie;
  return t;
}

}  // namespace curatune::eval
