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

#include <array>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "curatune/core/random.hpp"
#include "curatune/eval/report.hpp"

namespace curatune::testutil {

/// Win/tie/lose task counts over n tasks.
struct OutcomeCounts {
  std::int64_t wins = 0, ties = 0, losses = 0;
  std::int64_t n() const { return wins + ties + losses; }
};

/// Smallest n >= n_min (searching up to n_max) admitting integer counts whose
/// one-decimal percentages equal the target triple, found by exhaustive search.
inline std::optional<OutcomeCounts> find_counts(double win, double tie, double lose, std::int64_t n_min = 1000,
                                                std::int64_t n_max = 5000) {
  for (std::int64_t n = n_min; n <= n_max; ++n)
    for (std::int64_t w = 0; w <= n; ++w) {
      if (eval::percent_one_decimal(w, n) != win) continue;
      for (std::int64_t t = 0; w + t <= n; ++t) {
        if (eval::percent_one_decimal(t, n) != tie) continue;
        if (eval::percent_one_decimal(n - w - t, n) == lose) return OutcomeCounts{w, t, n - w - t};
      }
    }
  return std::nullopt;
}

/// n prompts of the given source with stylized tags from the OUI-like generator.
inline std::vector<eval::PromptRecord> make_prompts(std::size_t n, std::uint64_t seed,
                                                    const std::string& source = eval::kSourceParti) {
  auto ps = eval::generate_oui_like_prompts(n, seed);
  for (auto& p : ps) {
    p.source = source;
    p.id = source.substr(0, 2) + "-" + p.id;
  }
  return ps;
}

inline std::vector<eval::ComparisonTask> make_tasks(const std::vector<eval::PromptRecord>& prompts, eval::Metric m,
                                                    std::uint64_t seed, const eval::ModelPair& models = {}) {
  std::map<std::string, std::string> xi, yi;
  for (const auto& p : prompts) {
    xi[p.id] = "x/" + p.id + ".png";
    yi[p.id] = "y/" + p.id + ".png";
  }
  return eval::build_task_set(prompts, xi, yi, m, seed, models);
}

/// Verdict strings for one task realizing `want` under plurality
/// aggregation; several vote patterns per outcome are cycled through by
/// `variant` so that the aggregation rule, not one pattern, is exercised.
inline std::vector<std::string> votes_for(const eval::ComparisonTask& t, const std::string& model_x,
                                          eval::Outcome want, std::size_t variant) {
  const bool a_is_x = t.assignment.model_a == model_x;
  const std::string X = a_is_x ? "A" : "B", Y = a_is_x ? "B" : "A";
  const bool va = t.metric == eval::Metric::VisualAppeal;
  const std::string T1 = va ? "Tie" : "Both", T2 = va ? "Tie" : "Neither";
  std::vector<std::vector<std::string>> pats;
  if (va) {
    switch (want) {
      case eval::Outcome::XWins: pats = {{X, X, X, Y, Y}, {X, X, T1, X, Y}, {X, X, X, X, X}, {X, T1, X, T1, X}}; break;
      case eval::Outcome::YWins: pats = {{Y, Y, Y, X, X}, {Y, Y, X, T1, Y}, {Y, Y, Y, Y, T1}}; break;
      case eval::Outcome::Tie: pats = {{X, X, Y, Y, T1}, {T1, T1, T1, X, Y}, {X, Y, T1, T1, X}}; break;
    }
  } else {
    switch (want) {
      case eval::Outcome::XWins: pats = {{X, X, Y}, {X, X, T1}, {X, X, X}}; break;
      case eval::Outcome::YWins: pats = {{Y, Y, X}, {Y, T2, Y}}; break;
      case eval::Outcome::Tie: pats = {{X, Y, T1}, {T1, T2, X}, {T2, T2, Y}}; break;
    }
  }
  return pats[variant % pats.size()];
}

/// Judgment log realizing `outcomes[i]` for `tasks[i]`, in a seeded
/// interleaved order.
inline std::vector<eval::PreferenceJudgment> make_log(const std::vector<eval::ComparisonTask>& tasks,
                                                      const std::vector<eval::Outcome>& outcomes,
                                                      const std::string& model_x, std::uint64_t seed) {
  std::vector<eval::PreferenceJudgment> log;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto v = votes_for(tasks[i], model_x, outcomes[i], i / 3);
    for (std::size_t k = 0; k < v.size(); ++k)
      log.push_back({tasks[i].task_id, "rater" + std::to_string(k), v[k], ""});
  }
  const auto perm = seeded_permutation(log.size(), seed, 0x106);
  std::vector<eval::PreferenceJudgment> out;
  out.reserve(log.size());
  for (auto i : perm) out.push_back(log[i]);
  return out;
}

/// Outcome vector with the given counts, shuffled over task positions.
inline std::vector<eval::Outcome> spread_outcomes(const OutcomeCounts& c, std::uint64_t seed) {
  std::vector<eval::Outcome> v;
  v.insert(v.end(), static_cast<std::size_t>(c.wins), eval::Outcome::XWins);
  v.insert(v.end(), static_cast<std::size_t>(c.ties), eval::Outcome::Tie);
  v.insert(v.end(), static_cast<std::size_t>(c.losses), eval::Outcome::YWins);
  const auto perm = seeded_permutation(v.size(), seed, 0x0C7);
  std::vector<eval::Outcome> out;
  for (auto i : perm) out.push_back(v[i]);
  return out;
}

/// Random judgment log: each task receives a random number of judgments
/// (possibly incomplete) with uniformly random allowed verdicts.
inline std::vector<eval::PreferenceJudgment> random_log(const std::vector<eval::ComparisonTask>& tasks, Rng& rng) {
  std::vector<eval::PreferenceJudgment> log;
  std::uniform_int_distribution<int> pick(0, 3);
  std::uniform_int_distribution<int> incomplete(0, 9);
  for (const auto& t : tasks) {
    const int k = incomplete(rng) == 0 ? t.required - 1 : t.required;
    for (int r = 0; r < k; ++r) {
      const int v = pick(rng);
      std::string verdict = v == 0 ? "A" : v == 1 ? "B" : "";
      if (verdict.empty())
        verdict = t.metric == eval::Metric::VisualAppeal ? "Tie" : (v == 2 ? "Both" : "Neither");
      log.push_back({t.task_id, "r" + std::to_string(r), verdict, ""});
    }
  }
  return log;
}

/// Swaps the A/B verdict labels of every judgment.
inline std::vector<eval::PreferenceJudgment> swap_verdicts(std::vector<eval::PreferenceJudgment> log) {
  for (auto& j : log) {
    if (j.verdict == "A") j.verdict = "B";
    else if (j.verdict == "B") j.verdict = "A";
  }
  return log;
}

/// Swaps which model is shown on side A for every task.
inline std::vector<eval::ComparisonTask> swap_sides(std::vector<eval::ComparisonTask> tasks) {
  for (auto& t : tasks) {
    std::swap(t.assignment.model_a, t.assignment.model_b);
    std::swap(t.assignment.image_a, t.assignment.image_b);
  }
  return tasks;
}

}  // namespace curatune::testutil
