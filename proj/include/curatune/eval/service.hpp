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

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "curatune/core/http.hpp"
#include <nlohmann/json.hpp>

#include "curatune/core/io.hpp"
#include "curatune/curation/server.hpp"
#include "curatune/eval/report.hpp"

namespace curatune::eval {

using curation::Clock;
using curation::Reply;

/// On-disk evaluation state:
///   meta.json          {"model_x", "model_y", "seed", "claim_timeout_s"}
///   prompts.jsonl      prompt manifest rows
///   tasks.jsonl        annotator-visible payloads
///   assignments.jsonl  hidden side→model map per task
///   judgments.jsonl    append-only judgment log
struct EvalState {
  ModelPair models;
  double claim_timeout_s = 600.0;
  std::vector<PromptRecord> prompts;
  std::vector<ComparisonTask> tasks;
  std::vector<PreferenceJudgment> judgments;
};

inline void write_eval_state(const std::filesystem::path& dir, const std::vector<PromptRecord>& prompts,
                             const std::vector<ComparisonTask>& tasks, const ModelPair& models, std::uint64_t seed,
                             double claim_timeout_s = 600.0) {
  std::filesystem::create_directories(dir);
  std::vector<nlohmann::json> p, t, a;
  for (const auto& r : prompts) p.emplace_back(r);
  for (const auto& r : tasks) {
    t.push_back(visible_payload(r));
    a.push_back(assignment_row(r));
  }
  io::write_text(dir / "meta.json", nlohmann::json{{"model_x", models.x},
                                                   {"model_y", models.y},
                                                   {"seed", seed},
                                                   {"claim_timeout_s", claim_timeout_s}}
                                            .dump(2) +
                                        "\n");
  io::write_jsonl(dir / "prompts.jsonl", p);
  io::write_jsonl(dir / "tasks.jsonl", t);
  io::write_jsonl(dir / "assignments.jsonl", a);
  if (!std::filesystem::exists(dir / "judgments.jsonl")) io::write_text(dir / "judgments.jsonl", "");
}

inline EvalState load_eval_state(const std::filesystem::path& dir) {
  for (const char* f : {"meta.json", "prompts.jsonl", "tasks.jsonl", "assignments.jsonl"})
    if (!std::filesystem::exists(dir / f)) throw NotFoundError("eval state " + dir.string() + " lacks " + f);
  EvalState st;
  const auto meta = nlohmann::json::parse(io::read_text(dir / "meta.json"));
  st.models.x = meta.at("model_x").get<std::string>();
  st.models.y = meta.at("model_y").get<std::string>();
  st.claim_timeout_s = meta.value("claim_timeout_s", 600.0);
  for (const auto& row : io::read_jsonl(dir / "prompts.jsonl")) st.prompts.push_back(row.get<PromptRecord>());
  std::map<std::string, ModelAssignment> assign;
  for (const auto& row : io::read_jsonl(dir / "assignments.jsonl")) assign.insert(assignment_from_row(row));
  for (const auto& row : io::read_jsonl(dir / "tasks.jsonl")) {
    ComparisonTask t = task_from_payload(row);
    auto it = assign.find(t.task_id);
    if (it == assign.end()) throw DataError("task " + t.task_id + " has no model assignment");
    t.assignment = it->second;
    st.tasks.push_back(std::move(t));
  }
  if (std::filesystem::exists(dir / "judgments.jsonl"))
    for (const auto& row : io::read_jsonl(dir / "judgments.jsonl")) st.judgments.push_back(row.get<PreferenceJudgment>());
  return st;
}

/// Task claims and judgment ingestion over an eval state directory. Each
/// (task, annotator) pair is handed out at most once; a task's open slots are
/// required_judgments minus recorded judgments minus live claims.
class EvalService {
 public:
  explicit EvalService(std::filesystem::path dir, Clock clock = curation::steady_seconds)
      : dir_(std::move(dir)), clock_(std::move(clock)), st_(load_eval_state(dir_)) {
    for (std::size_t i = 0; i < st_.tasks.size(); ++i) index_[st_.tasks[i].task_id] = i;
    for (const auto& j : st_.judgments) {
      if (!index_.count(j.task_id)) throw DataError("judgment log names unknown task " + j.task_id);
      judged_[j.task_id].insert(j.annotator_id);
    }
  }

  /// GET /eval/tasks/next?annotator=
  Reply next_task(const std::string& annotator) {
    std::lock_guard lock(mu_);
    if (annotator.empty()) return {400, {{"error", "annotator is required"}}};
    const double now = clock_();
    expire(now);
    for (const auto& [task_id, holders] : claims_)
      if (auto it = holders.find(annotator); it != holders.end()) return task_reply(task_id, it->second);
    for (const auto& t : st_.tasks) {
      if (judged_[t.task_id].count(annotator)) continue;
      if (open_slots(t) <= 0) continue;
      const double expires = now + st_.claim_timeout_s;
      claims_[t.task_id][annotator] = expires;
      return task_reply(t.task_id, expires);
    }
    return {204, nlohmann::json()};
  }

  /// POST /eval/tasks/<id>/judgment {"annotator", "verdict"}
  Reply submit_judgment(const std::string& task_id, const nlohmann::json& body) {
    std::lock_guard lock(mu_);
    auto idx = index_.find(task_id);
    if (idx == index_.end()) return {404, {{"error", "unknown task " + task_id}}};
    if (!body.is_object()) return {400, {{"error", "body must be a JSON object"}}};
    const std::string annotator = body.value("annotator", std::string{});
    const std::string verdict = body.value("verdict", std::string{});
    if (annotator.empty()) return {400, {{"error", "annotator is required"}}};
    const ComparisonTask& t = st_.tasks[idx->second];
    if (!verdict_allowed(t.metric, verdict))
      return {400, {{"error", "verdict '" + verdict + "' not allowed for " + metric_name(t.metric)}}};
    if (judged_[task_id].count(annotator))
      return {409, {{"error", "annotator " + annotator + " already judged " + task_id}}};
    expire(clock_());
    auto& holders = claims_[task_id];
    const bool holds_claim = holders.count(annotator) > 0;
    if (!holds_claim && open_slots(t) <= 0) {
      if (holders.empty()) claims_.erase(task_id);
      return {409, {{"error", "task " + task_id + " has no open slot for " + annotator}}};
    }
    PreferenceJudgment j{task_id, annotator, verdict, curation::utc_timestamp()};
    io::append_jsonl(dir_ / "judgments.jsonl", nlohmann::json(j));
    st_.judgments.push_back(j);
    judged_[task_id].insert(annotator);
    holders.erase(annotator);
    if (holders.empty()) claims_.erase(task_id);
    const auto n = static_cast<int>(judged_[task_id].size());
    return {200, {{"task_id", task_id}, {"judgments", n}, {"required", t.required}, {"complete", n >= t.required}}};
  }

  /// GET /eval/report[?slice=all|stylized]
  Reply report(const std::string& slice = "") {
    std::lock_guard lock(mu_);
    std::vector<std::string> slices{kSliceAll, kSliceStylized};
    if (!slice.empty()) {
      if (slice != kSliceAll && slice != kSliceStylized) return {400, {{"error", "slice must be all or stylized"}}};
      slices = {slice};
    }
    return {200, nlohmann::json(report_from_log(st_.tasks, st_.prompts, st_.judgments, st_.models, slices))};
  }

  /// Underlying image for side 'a' or 'b' of a task (relative paths resolve
  /// against the state directory).
  std::optional<std::filesystem::path> image_path(const std::string& task_id, const std::string& side) {
    std::lock_guard lock(mu_);
    auto idx = index_.find(task_id);
    if (idx == index_.end() || (side != "a" && side != "b")) return std::nullopt;
    const auto& a = st_.tasks[idx->second].assignment;
    std::filesystem::path p(side == "a" ? a.image_a : a.image_b);
    return p.is_absolute() ? p : dir_ / p;
  }

 private:
  int open_slots(const ComparisonTask& t) const {
    int used = 0;
    if (auto it = judged_.find(t.task_id); it != judged_.end()) used += static_cast<int>(it->second.size());
    if (auto it = claims_.find(t.task_id); it != claims_.end()) used += static_cast<int>(it->second.size());
    return t.required - used;
  }

  void expire(double now) {
    for (auto it = claims_.begin(); it != claims_.end();) {
      for (auto h = it->second.begin(); h != it->second.end();) h = h->second <= now ? it->second.erase(h) : std::next(h);
      it = it->second.empty() ? claims_.erase(it) : std::next(it);
    }
  }

  Reply task_reply(const std::string& task_id, double expires) const {
    nlohmann::json j = visible_payload(st_.tasks[index_.at(task_id)]);
    j["claim_expires_in_s"] = expires - clock_();
    return {200, j};
  }

  std::filesystem::path dir_;
  Clock clock_;
  std::mutex mu_;
  EvalState st_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::set<std::string>> judged_;
  std::map<std::string, std::map<std::string, double>> claims_;  // task -> annotator -> expiry
};

/// Registers the evaluation HTTP API on `server`.
inline void register_eval_routes(httplib::Server& server, EvalService& svc) {
  server.Get("/eval/tasks/next", [&svc](const httplib::Request& req, httplib::Response& res) {
    curation::detail::send(res, svc.next_task(req.get_param_value("annotator")));
  });
  server.Post(R"(/eval/tasks/([^/]+)/judgment)", [&svc](const httplib::Request& req, httplib::Response& res) {
    if (auto body = curation::detail::parse_body(req, res))
      curation::detail::send(res, svc.submit_judgment(req.matches[1], *body));
  });
  server.Get(R"(/eval/tasks/([^/]+)/image/([ab]))", [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto path = svc.image_path(req.matches[1], req.matches[2]);
    if (!path || !std::filesystem::exists(*path)) return curation::detail::send(res, {404, {{"error", "no image"}}});
    res.set_content(io::read_text(*path), "image/png");
  });
  server.Get("/eval/report", [&svc](const httplib::Request& req, httplib::Response& res) {
    curation::detail::send(res, svc.report(req.get_param_value("slice")));
  });
}

}  // namespace curatune::eval
