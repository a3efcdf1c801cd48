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
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "curatune/curation/cascade.hpp"

namespace curatune::curation {

/// Stage-2 photography checklist. Every answer is stored as pass (true) / fail
/// (false). For subjective_q2 ("could this be captured better?") a "yes" answer
/// is a fail, i.e. subjective_q2 == false.
struct ChecklistVerdict {
  std::optional<bool> composition;
  std::optional<bool> lighting;
  std::optional<bool> color_contrast;
  std::optional<bool> subject_background;
  std::optional<bool> subjective_q1;
  std::optional<bool> subjective_q2;
  std::optional<bool> subjective_q3;
  std::string annotator_id;
  std::string timestamp;

  static constexpr std::array<const char*, 7> kItems{"composition",   "lighting",      "color_contrast",
                                                      "subject_background", "subjective_q1", "subjective_q2",
                                                      "subjective_q3"};

  std::array<const std::optional<bool>*, 7> answers() const {
    return {&composition, &lighting, &color_contrast, &subject_background, &subjective_q1, &subjective_q2,
            &subjective_q3};
  }

  std::vector<std::string> missing() const {
    std::vector<std::string> m;
    const auto a = answers();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!a[i]->has_value()) m.emplace_back(kItems[i]);
    return m;
  }

  bool complete() const { return missing().empty(); }

  /// First failing item in declared order, or empty when all pass.
  std::string first_failure() const {
    const auto a = answers();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i]->has_value() && !**a[i]) return kItems[i];
    return {};
  }
};

inline void to_json(nlohmann::json& j, const ChecklistVerdict& v) {
  j = nlohmann::json::object();
  const auto a = v.answers();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i]->has_value()) j[ChecklistVerdict::kItems[i]] = **a[i];
  if (!v.annotator_id.empty()) j["annotator_id"] = v.annotator_id;
  if (!v.timestamp.empty()) j["timestamp"] = v.timestamp;
}

inline void from_json(const nlohmann::json& j, ChecklistVerdict& v) {
  if (!j.is_object()) throw DataError("checklist must be a JSON object");
  std::optional<bool>* slots[] = {&v.composition,   &v.lighting,      &v.color_contrast, &v.subject_background,
                                  &v.subjective_q1, &v.subjective_q2, &v.subjective_q3};
  for (std::size_t i = 0; i < 7; ++i) {
    const char* k = ChecklistVerdict::kItems[i];
    if (!j.contains(k) || j[k].is_null()) continue;
    if (!j[k].is_boolean()) throw DataError(std::string("checklist item ") + k + " must be a boolean");
    *slots[i] = j[k].get<bool>();
  }
  v.annotator_id = j.value("annotator_id", std::string{});
  v.timestamp = j.value("timestamp", std::string{});
}

/// Append-only event log entry.
struct Event {
  std::string record_id;
  std::string op;  // "stage1" | "stage2" | "caption"
  nlohmann::json payload = nlohmann::json::object();
  std::string annotator_id;
  std::string ts;
};

inline void to_json(nlohmann::json& j, const Event& e) {
  j = {{"record_id", e.record_id}, {"op", e.op}, {"payload", e.payload}, {"annotator_id", e.annotator_id}, {"ts", e.ts}};
}

inline void from_json(const nlohmann::json& j, Event& e) {
  try {
    e.record_id = j.at("record_id").get<std::string>();
    e.op = j.at("op").get<std::string>();
    e.payload = j.value("payload", nlohmann::json::object());
    e.annotator_id = j.value("annotator_id", std::string{});
    e.ts = j.value("ts", std::string{});
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed event: ") + ex.what());
  }
}

struct FunnelStats {
  long long pool = 0;         // all records
  long long auto_passed = 0;  // reached AUTO_PASSED or beyond
  long long stage1_kept = 0;  // reached STAGE1_KEPT or beyond
  long long selected = 0;
  std::map<std::string, long long> by_stage;  // current counts per state
  long long budget_stage1 = 0;
  long long budget_final = 0;
};

inline void to_json(nlohmann::json& j, const FunnelStats& s) {
  j = {{"pool", s.pool},
       {"auto_passed", s.auto_passed},
       {"stage1_kept", s.stage1_kept},
       {"selected", s.selected},
       {"by_stage", s.by_stage},
       {"budget_stage1", s.budget_stage1},
       {"budget_final", s.budget_final},
       {"remaining_stage1", std::max(0LL, s.budget_stage1 - s.stage1_kept)},
       {"remaining_final", std::max(0LL, s.budget_final - s.selected)}};
}

/// Outcome of applying one event.
enum class ApplyResult { Applied, Duplicate };

/// Curation store: records keyed by id plus the set of processed (record, op)
/// pairs, which makes event application idempotent.
class CurationState {
 public:
  CurationState(std::vector<ImageRecord> records, CascadeConfig config) : config_(std::move(config)) {
    config_.validate();
    for (auto& r : records) {
      const std::string id = r.id;
      if (!records_.emplace(id, std::move(r)).second) throw DataError("duplicate record id " + id);
    }
    for (const auto& [_, r] : records_) {
      if (funnel_depth(r.stage) >= 2) ++kept_;
      if (r.stage == Stage::Selected) ++selected_;
    }
  }

  const CascadeConfig& config() const { return config_; }
  const std::map<std::string, ImageRecord>& records() const { return records_; }

  const ImageRecord& record(const std::string& id) const {
    auto it = records_.find(id);
    if (it == records_.end()) throw NotFoundError("no record " + id);
    return it->second;
  }

  /// Stage-1 (generalist) review: AUTO_PASSED -> STAGE1_KEPT | STAGE1_REJECTED.
  /// Keeps beyond budget_stage1 become rejections with reason "budget".
  const ImageRecord& stage1_review(const std::string& id, bool keep, const std::string& annotator_id) {
    ImageRecord& r = mutable_record(id);
    if (r.stage != Stage::AutoPassed)
      throw StateError("record " + id + " is in " + stage_name(r.stage) + ", stage-1 review needs AUTO_PASSED");
    if (keep && kept_ < config_.budget_stage1) {
      r.stage = Stage::Stage1Kept;
      r.reason.clear();
      ++kept_;
    } else {
      r.stage = Stage::Stage1Rejected;
      r.reason = keep ? "budget" : "stage1";
    }
    done_.emplace(id, "stage1");
    (void)annotator_id;
    return r;
  }

  /// Stage-2 (specialist) review: STAGE1_KEPT -> SELECTED iff every checklist
  /// answer passes and budget_final is not exhausted.
  const ImageRecord& stage2_review(const std::string& id, const ChecklistVerdict& checklist,
                                   const std::string& curated_caption = {}) {
    ImageRecord& r = mutable_record(id);
    if (r.stage != Stage::Stage1Kept)
      throw StateError("record " + id + " is in " + stage_name(r.stage) + ", stage-2 review needs STAGE1_KEPT");
    const auto missing = checklist.missing();
    if (!missing.empty()) {
      std::string m;
      for (const auto& s : missing) m += (m.empty() ? "" : ", ") + s;
      throw DataError("incomplete checklist for " + id + ": missing " + m);
    }
    const std::string fail = checklist.first_failure();
    if (!fail.empty()) {
      r.stage = Stage::Stage2Rejected;
      r.reason = fail;
    } else if (selected_ >= config_.budget_final) {
      r.stage = Stage::Stage2Rejected;
      r.reason = "budget";
    } else {
      r.stage = Stage::Selected;
      r.reason.clear();
      ++selected_;
    }
    if (!curated_caption.empty()) r.curated_caption = curated_caption;
    done_.emplace(id, "stage2");
    return r;
  }

  /// Sets the human-written caption of a SELECTED record.
  const ImageRecord& set_curated_caption(const std::string& id, const std::string& caption) {
    ImageRecord& r = mutable_record(id);
    if (r.stage != Stage::Selected) throw StateError("curated captions are only set on SELECTED records");
    if (caption.empty()) throw DataError("curated caption must be nonempty");
    r.curated_caption = caption;
    return r;
  }

  /// True when the (record, op) pair has already been applied.
  bool already_applied(const Event& e) const { return done_.count({e.record_id, e.op}) > 0; }

  /// Throws exactly what apply() would throw for `e`, without changing state.
  void check(const Event& e) const {
    const ImageRecord& r = record(e.record_id);
    if (e.op == "stage1") {
      if (r.stage != Stage::AutoPassed)
        throw StateError("record " + e.record_id + " is in " + stage_name(r.stage) +
                         ", stage-1 review needs AUTO_PASSED");
      const auto& v = e.payload.contains("verdict") ? e.payload["verdict"] : nlohmann::json();
      if (!v.is_string() || (v != "keep" && v != "reject"))
        throw DataError("stage-1 verdict must be \"keep\" or \"reject\"");
    } else if (e.op == "stage2") {
      if (r.stage != Stage::Stage1Kept)
        throw StateError("record " + e.record_id + " is in " + stage_name(r.stage) +
                         ", stage-2 review needs STAGE1_KEPT");
      if (!e.payload.contains("checklist")) throw DataError("stage-2 event has no checklist");
      const auto missing = e.payload["checklist"].get<ChecklistVerdict>().missing();
      if (!missing.empty()) throw DataError("incomplete checklist for " + e.record_id + ": missing " + missing.front());
      if (e.payload.contains("curated_caption") && !e.payload["curated_caption"].is_string())
        throw DataError("curated_caption must be a string");
    } else if (e.op == "caption") {
      if (r.stage != Stage::Selected) throw StateError("curated captions are only set on SELECTED records");
      if (e.payload.value("curated_caption", std::string{}).empty()) throw DataError("curated caption must be nonempty");
    } else {
      throw DataError("unknown event op '" + e.op + "'");
    }
  }

  /// Applies one event. Stage events already applied for the same record are
  /// duplicates and leave the state untouched; invalid events throw.
  ApplyResult apply(const Event& e) {
    if ((e.op == "stage1" || e.op == "stage2") && already_applied(e)) return ApplyResult::Duplicate;
    check(e);
    if (e.op == "stage1") {
      stage1_review(e.record_id, e.payload["verdict"] == "keep", e.annotator_id);
    } else if (e.op == "stage2") {
      stage2_review(e.record_id, e.payload["checklist"].get<ChecklistVerdict>(),
                    e.payload.value("curated_caption", std::string{}));
    } else {
      set_curated_caption(e.record_id, e.payload["curated_caption"].get<std::string>());
    }
    return ApplyResult::Applied;
  }

  struct ReplayStats {
    long long applied = 0;
    long long duplicates = 0;
    long long skipped = 0;  // invalid for the record's current state
  };

  /// Replays a log. Events that are duplicates or invalid in the current state
  /// are skipped, so replaying the same log again is a no-op.
  ReplayStats replay(const std::vector<Event>& events) {
    ReplayStats s;
    for (const auto& e : events) {
      try {
        if (apply(e) == ApplyResult::Applied)
          ++s.applied;
        else
          ++s.duplicates;
      } catch (const Error&) {
        ++s.skipped;
      }
    }
    return s;
  }

  FunnelStats funnel() const {
    FunnelStats s;
    s.budget_stage1 = config_.budget_stage1;
    s.budget_final = config_.budget_final;
    for (Stage st : {Stage::Pool, Stage::AutoPassed, Stage::Stage1Kept, Stage::Stage1Rejected, Stage::Selected,
                     Stage::Stage2Rejected})
      s.by_stage[stage_name(st)] = 0;
    for (const auto& [_, r] : records_) {
      ++s.pool;
      ++s.by_stage[stage_name(r.stage)];
      const int d = funnel_depth(r.stage);
      if (d >= 1) ++s.auto_passed;
      if (d >= 2) ++s.stage1_kept;
      if (d >= 3) ++s.selected;
    }
    return s;
  }

  /// Canonical serialization of the whole state (records sorted by id).
  std::string snapshot() const {
    std::string out;
    for (const auto& [_, r] : records_) out += nlohmann::json(r).dump() + "\n";
    return out;
  }

 private:
  ImageRecord& mutable_record(const std::string& id) {
    auto it = records_.find(id);
    if (it == records_.end()) throw NotFoundError("no record " + id);
    return it->second;
  }

  CascadeConfig config_;
  std::map<std::string, ImageRecord> records_;
  std::set<std::pair<std::string, std::string>> done_;
  long long kept_ = 0;
  long long selected_ = 0;
};

/// Manifest of SELECTED records ordered by id (the qtune input format). Each
/// row carries "uri", "caption" (the curated caption) and "curated_caption".
/// Throws DataError listing every SELECTED record without a curated caption.
inline std::vector<nlohmann::json> export_quality_set(const CurationState& state) {
  std::vector<std::string> missing;
  std::vector<nlohmann::json> rows;
  for (const auto& [id, r] : state.records()) {
    if (r.stage != Stage::Selected) continue;
    if (r.curated_caption.empty()) {
      missing.push_back(id);
      continue;
    }
    nlohmann::json j = r;
    j["source_caption"] = r.caption;
    j["caption"] = r.curated_caption;
    rows.push_back(std::move(j));
  }
  if (!missing.empty()) {
    std::string m;
    for (const auto& id : missing) m += (m.empty() ? "" : ", ") + id;
    throw DataError("export blocked: SELECTED records without a curated caption: " + m);
  }
  return rows;
}

}  // namespace curatune::curation
