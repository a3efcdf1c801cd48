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

#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "curatune/core/http.hpp"
#include <nlohmann/json.hpp>

#include "curatune/core/io.hpp"
#include "curatune/curation/review.hpp"

namespace curatune::curation {

/// Seconds on a monotonic clock; injectable for tests.
using Clock = std::function<double()>;

inline double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// HTTP-level outcome: status code plus JSON body.
struct Reply {
  int status = 200;
  nlohmann::json body = nlohmann::json::object();
};

/// State directory layout: records.jsonl (initial records), config.yaml,
/// events.jsonl (append-only log). The service is the log's single writer;
/// every public method is serialized by one mutex.
class CurationService {
 public:
  explicit CurationService(std::filesystem::path state_dir, Clock clock = steady_seconds)
      : dir_(std::move(state_dir)), clock_(std::move(clock)), state_(load_state(dir_)) {}

  static CurationState load_state(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "records.jsonl"))
      throw NotFoundError("state directory " + dir.string() + " has no records.jsonl");
    CascadeConfig cfg;
    if (std::filesystem::exists(dir / "config.yaml")) cfg = io::load_config(dir / "config.yaml").get<CascadeConfig>();
    std::vector<ImageRecord> records;
    for (const auto& row : io::read_jsonl(dir / "records.jsonl")) records.push_back(row.get<ImageRecord>());
    CurationState st(std::move(records), cfg);
    if (std::filesystem::exists(dir / "events.jsonl")) {
      std::vector<Event> events;
      for (const auto& row : io::read_jsonl(dir / "events.jsonl")) events.push_back(row.get<Event>());
      st.replay(events);
    }
    return st;
  }

  /// GET /tasks/next?stage=1|2&annotator=
  Reply next_task(int stage, const std::string& annotator) {
    std::lock_guard lock(mu_);
    if (stage != 1 && stage != 2) return {400, {{"error", "stage must be 1 or 2"}}};
    if (annotator.empty()) return {400, {{"error", "annotator is required"}}};
    const Stage want = stage == 1 ? Stage::AutoPassed : Stage::Stage1Kept;
    const double now = clock_();
    // An annotator holding a live claim in this stage gets it back.
    for (const auto& [id, c] : claims_)
      if (c.annotator == annotator && c.expires > now && state_.record(id).stage == want) return task_reply(id, stage, c);
    for (const auto& [id, r] : state_.records()) {
      if (r.stage != want) continue;
      auto it = claims_.find(id);
      if (it != claims_.end() && it->second.expires > now) continue;
      Claim c{annotator, now + state_.config().claim_timeout_s};
      claims_[id] = c;
      return task_reply(id, stage, c);
    }
    return {204, nlohmann::json()};
  }

  /// POST /tasks/<id>/verdict
  ///   stage 1: {"annotator", "stage": 1, "verdict": "keep"|"reject"}
  ///   stage 2: {"annotator", "stage": 2, "checklist": {...}, "curated_caption"?}
  Reply submit_verdict(const std::string& id, const nlohmann::json& body) {
    std::lock_guard lock(mu_);
    if (!state_.records().count(id)) return {404, {{"error", "unknown task " + id}}};
    if (!body.is_object()) return {400, {{"error", "body must be a JSON object"}}};
    const std::string annotator = body.value("annotator", std::string{});
    if (annotator.empty()) return {400, {{"error", "annotator is required"}}};
    const int stage = body.value("stage", 0);
    if (stage != 1 && stage != 2) return {400, {{"error", "stage must be 1 or 2"}}};
    const double now = clock_();
    if (auto it = claims_.find(id); it != claims_.end() && it->second.expires > now && it->second.annotator != annotator)
      return {409, {{"error", "task " + id + " is claimed by another annotator"}}};
    Event e;
    e.record_id = id;
    e.op = stage == 1 ? "stage1" : "stage2";
    e.annotator_id = annotator;
    e.ts = utc_timestamp();
    if (stage == 1) {
      e.payload = {{"verdict", body.value("verdict", std::string{})}};
    } else {
      if (!body.contains("checklist")) return {400, {{"error", "checklist is required"}}};
      nlohmann::json checklist = body["checklist"];
      if (checklist.is_object()) {
        checklist["annotator_id"] = annotator;
        checklist["timestamp"] = e.ts;
      }
      e.payload = {{"checklist", checklist}};
      if (body.contains("curated_caption")) e.payload["curated_caption"] = body["curated_caption"];
    }
    if (state_.already_applied(e)) return {409, {{"error", "verdict already recorded for " + id}}};
    try {
      state_.check(e);
    } catch (const StateError& ex) {
      return {409, {{"error", ex.what()}}};
    } catch (const Error& ex) {
      return {400, {{"error", ex.what()}}};
    }
    io::append_jsonl(dir_ / "events.jsonl", nlohmann::json(e));
    state_.apply(e);
    claims_.erase(id);
    const auto& r = state_.record(id);
    nlohmann::json out = {{"id", id}, {"stage", stage_name(r.stage)}};
    if (!r.reason.empty()) out["reason"] = r.reason;
    return {200, out};
  }

  /// POST /tasks/<id>/caption {"annotator", "curated_caption"}
  Reply submit_caption(const std::string& id, const nlohmann::json& body) {
    std::lock_guard lock(mu_);
    if (!state_.records().count(id)) return {404, {{"error", "unknown task " + id}}};
    Event e{id, "caption", {{"curated_caption", body.value("curated_caption", std::string{})}},
            body.value("annotator", std::string{}), utc_timestamp()};
    try {
      state_.check(e);
    } catch (const StateError& ex) {
      return {409, {{"error", ex.what()}}};
    } catch (const Error& ex) {
      return {400, {{"error", ex.what()}}};
    }
    io::append_jsonl(dir_ / "events.jsonl", nlohmann::json(e));
    state_.apply(e);
    return {200, {{"id", id}, {"curated_caption", state_.record(id).curated_caption}}};
  }

  Reply funnel_stats() {
    std::lock_guard lock(mu_);
    return {200, nlohmann::json(state_.funnel())};
  }

  /// Image file behind a record's uri (relative uris resolve against the state dir).
  std::optional<std::filesystem::path> image_path(const std::string& id) {
    std::lock_guard lock(mu_);
    if (!state_.records().count(id)) return std::nullopt;
    const std::string& uri = state_.record(id).uri;
    if (uri.empty()) return std::nullopt;
    std::filesystem::path p(uri);
    return p.is_absolute() ? p : dir_ / p;
  }

  std::string snapshot() {
    std::lock_guard lock(mu_);
    return state_.snapshot();
  }

 private:
  struct Claim {
    std::string annotator;
    double expires = 0.0;
  };

  Reply task_reply(const std::string& id, int stage, const Claim& c) const {
    const auto& r = state_.record(id);
    return {200,
            {{"task_id", id},
             {"stage", stage},
             {"record", {{"id", r.id}, {"uri", r.uri}, {"caption", r.caption}, {"width", r.width}, {"height", r.height},
                         {"concept", r.concept_label}}},
             {"claim_expires_in_s", c.expires - clock_()}}};
  }

  std::filesystem::path dir_;
  Clock clock_;
  std::mutex mu_;
  CurationState state_;
  std::map<std::string, Claim> claims_;
};

namespace detail {

inline void send(httplib::Response& res, const Reply& r) {
  res.status = r.status;
  if (r.status == 204) return;
  res.set_content(r.body.dump(), "application/json");
}

inline std::optional<nlohmann::json> parse_body(const httplib::Request& req, httplib::Response& res) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception&) {
    send(res, {400, {{"error", "request body is not valid JSON"}}});
    return std::nullopt;
  }
}

}  // namespace detail

/// Registers the curation HTTP API on `server`.
inline void register_curation_routes(httplib::Server& server, CurationService& svc) {
  server.Get("/tasks/next", [&svc](const httplib::Request& req, httplib::Response& res) {
    int stage = 0;
    try {
      stage = std::stoi(req.get_param_value("stage"));
    } catch (const std::exception&) {
      stage = 0;
    }
    detail::send(res, svc.next_task(stage, req.get_param_value("annotator")));
  });
  server.Post(R"(/tasks/([^/]+)/verdict)", [&svc](const httplib::Request& req, httplib::Response& res) {
    if (auto body = detail::parse_body(req, res)) detail::send(res, svc.submit_verdict(req.matches[1], *body));
  });
  server.Post(R"(/tasks/([^/]+)/caption)", [&svc](const httplib::Request& req, httplib::Response& res) {
    if (auto body = detail::parse_body(req, res)) detail::send(res, svc.submit_caption(req.matches[1], *body));
  });
  server.Get(R"(/tasks/([^/]+)/image)", [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto path = svc.image_path(req.matches[1]);
    if (!path || !std::filesystem::exists(*path)) return detail::send(res, {404, {{"error", "no image"}}});
    res.set_content(io::read_text(*path), "image/png");
  });
  server.Get("/funnel/stats",
             [&svc](const httplib::Request&, httplib::Response& res) { detail::send(res, svc.funnel_stats()); });
}

}  // namespace curatune::curation
