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

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curatune/eval/protocol.hpp"

namespace curatune::eval {

inline constexpr const char* kSliceAll = "all";
inline constexpr const char* kSliceStylized = "stylized";

inline void check_slice(const std::string& s) {
  if (s != kSliceAll && s != kSliceStylized)
    throw ConfigError("unknown slice '" + s + "' (expected all or stylized)");
}

/// 100·count/n rounded half-up to one decimal, computed in integers so the
/// result does not depend on floating-point representation of the ratio.
inline double percent_one_decimal(std::int64_t count, std::int64_t n) {
  if (n <= 0) throw DataError("percent_one_decimal: n must be positive");
  const std::int64_t tenths = (2000 * count + n) / (2 * n);
  return static_cast<double>(tenths) / 10.0;
}

/// One aggregated task with the prompt metadata needed for slicing.
struct TaskOutcome {
  std::string task_id;
  std::string source;
  Metric metric = Metric::VisualAppeal;
  bool stylized = false;
  Outcome outcome = Outcome::Tie;
  int votes_x = 0;
  int votes_y = 0;
  int votes_tie = 0;
};

struct SliceReport {
  std::string source;
  Metric metric = Metric::VisualAppeal;
  std::string slice;
  std::int64_t n_tasks = 0;
  std::int64_t wins = 0;  // X wins
  std::int64_t ties = 0;
  std::int64_t losses = 0;  // Y wins
  std::optional<double> win_pct, tie_pct, lose_pct;
  std::int64_t votes_x = 0, votes_y = 0, votes_tie = 0;
};

inline void to_json(nlohmann::json& j, const SliceReport& r) {
  auto pct = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = {{"source", r.source},
       {"metric", metric_name(r.metric)},
       {"slice", r.slice},
       {"n_tasks", r.n_tasks},
       {"wins", r.wins},
       {"ties", r.ties},
       {"losses", r.losses},
       {"win_pct", pct(r.win_pct)},
       {"tie_pct", pct(r.tie_pct)},
       {"lose_pct", pct(r.lose_pct)},
       {"raw_votes", {{"x", r.votes_x}, {"y", r.votes_y}, {"tie", r.votes_tie}}}};
}

struct EvalReport {
  ModelPair models;
  std::int64_t pending_tasks = 0;
  std::vector<SliceReport> rows;

  const SliceReport& row(const std::string& source, Metric m, const std::string& slice) const {
    for (const auto& r : rows)
      if (r.source == source && r.metric == m && r.slice == slice) return r;
    throw NotFoundError("no report row for " + source + "/" + metric_name(m) + "/" + slice);
  }
};

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"model_x", r.models.x},
       {"model_y", r.models.y},
       {"aggregation", "plurality over {A,B,Tie}; Both/Neither count as Tie; plurality ties are Tie"},
       {"pending_tasks", r.pending_tasks},
       {"rows", r.rows}};
}

/// Fills the counts and percentages of one row from its outcome subset.
inline SliceReport summarize(const std::vector<const TaskOutcome*>& outcomes, const std::string& source, Metric m,
                             const std::string& slice) {
  SliceReport r;
  r.source = source;
  r.metric = m;
  r.slice = slice;
  for (const auto* o : outcomes) {
    ++r.n_tasks;
    if (o->outcome == Outcome::XWins) ++r.wins;
    else if (o->outcome == Outcome::YWins) ++r.losses;
    else ++r.ties;
    r.votes_x += o->votes_x;
    r.votes_y += o->votes_y;
    r.votes_tie += o->votes_tie;
  }
  if (r.n_tasks > 0) {
    r.win_pct = percent_one_decimal(r.wins, r.n_tasks);
    r.tie_pct = percent_one_decimal(r.ties, r.n_tasks);
    r.lose_pct = percent_one_decimal(r.losses, r.n_tasks);
  }
  return r;
}

/// One row per (prompt source × metric × requested slice), always in the
/// same order; empty rows are reported with n_tasks = 0 and null percentages.
inline EvalReport compute_report(const std::vector<TaskOutcome>& outcomes,
                                 const std::vector<std::string>& slices = {kSliceAll, kSliceStylized},
                                 const ModelPair& models = {}, std::int64_t pending = 0) {
  for (const auto& s : slices) check_slice(s);
  EvalReport rep;
  rep.models = models;
  rep.pending_tasks = pending;
  for (const char* source : {kSourceParti, kSourceOui})
    for (Metric m : {Metric::VisualAppeal, Metric::TextFaithfulness})
      for (const auto& slice : slices) {
        std::vector<const TaskOutcome*> sel;
        for (const auto& o : outcomes)
          if (o.source == source && o.metric == m && (slice == kSliceAll || o.stylized)) sel.push_back(&o);
        rep.rows.push_back(summarize(sel, source, m, slice));
      }
  return rep;
}

/// Pure fold over a judgment log: groups judgments by task, aggregates each
/// complete task and reports. Throws DataError for judgments naming unknown
/// tasks or tasks naming unknown prompts.
inline EvalReport report_from_log(const std::vector<ComparisonTask>& tasks, const std::vector<PromptRecord>& prompts,
                                  const std::vector<PreferenceJudgment>& log, const ModelPair& models,
                                  const std::vector<std::string>& slices = {kSliceAll, kSliceStylized}) {
  std::map<std::string, const PromptRecord*> by_prompt;
  for (const auto& p : prompts) by_prompt[p.id] = &p;
  std::map<std::string, std::vector<PreferenceJudgment>> grouped;
  for (const auto& t : tasks) grouped[t.task_id];
  for (const auto& j : log) {
    auto it = grouped.find(j.task_id);
    if (it == grouped.end()) throw DataError("judgment for unknown task " + j.task_id);
    it->second.push_back(j);
  }
  std::vector<TaskOutcome> outcomes;
  std::int64_t pending = 0;
  for (const auto& t : tasks) {
    auto pit = by_prompt.find(t.prompt_id);
    if (pit == by_prompt.end()) throw DataError("task " + t.task_id + " names unknown prompt " + t.prompt_id);
    const TaskTally tally = aggregate_task(t, grouped[t.task_id], models.x);
    if (!tally.outcome) {
      ++pending;
      continue;
    }
    outcomes.push_back({t.task_id, pit->second->source, t.metric, pit->second->stylized, *tally.outcome, tally.votes_x,
                        tally.votes_y, tally.votes_tie});
  }
  return compute_report(outcomes, slices, models, pending);
}

}  // namespace curatune::eval
