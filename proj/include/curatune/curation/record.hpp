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
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curatune/core/error.hpp"

namespace curatune::curation {

enum class Stage { Pool, AutoPassed, Stage1Kept, Stage1Rejected, Selected, Stage2Rejected };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Pool: return "POOL";
    case Stage::AutoPassed: return "AUTO_PASSED";
    case Stage::Stage1Kept: return "STAGE1_KEPT";
    case Stage::Stage1Rejected: return "STAGE1_REJECTED";
    case Stage::Selected: return "SELECTED";
    case Stage::Stage2Rejected: return "STAGE2_REJECTED";
  }
  return "?";
}

inline Stage parse_stage(const std::string& s) {
  for (Stage st : {Stage::Pool, Stage::AutoPassed, Stage::Stage1Kept, Stage::Stage1Rejected, Stage::Selected,
                   Stage::Stage2Rejected})
    if (s == stage_name(st)) return st;
  throw DataError("unknown curation stage '" + s + "'");
}

inline bool is_terminal(Stage s) {
  return s == Stage::Stage1Rejected || s == Stage::Selected || s == Stage::Stage2Rejected;
}

/// Depth reached in the funnel (rejected states count as having reached the
/// stage that rejected them).
inline int funnel_depth(Stage s) {
  switch (s) {
    case Stage::Pool: return 0;
    case Stage::AutoPassed: return 1;
    case Stage::Stage1Rejected: return 1;
    case Stage::Stage1Kept: return 2;
    case Stage::Stage2Rejected: return 2;
    case Stage::Selected: return 3;
  }
  return 0;
}

struct ImageRecord {
  std::string id;
  std::string uri;
  int width = 0;
  int height = 0;
  std::string caption;
  double aesthetic_score = 0.0;
  double clip_score = 0.0;
  int ocr_word_count = 0;
  double engagement = 0.0;
  std::string concept_label = "other";  // JSON key "concept"
  Stage stage = Stage::Pool;
  /// Human-written caption composed during Stage-2 review.
  std::string curated_caption;
  /// Why the record left the funnel (filter name, checklist item, "budget").
  std::string reason;

  /// Well-formedness independent of any threshold.
  bool well_formed() const {
    return !id.empty() && width >= 1 && height >= 1 && std::isfinite(aesthetic_score) && std::isfinite(clip_score) &&
           ocr_word_count >= 0 && std::isfinite(engagement) && engagement >= 0.0;
  }

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

inline void to_json(nlohmann::json& j, const ImageRecord& r) {
  j = {{"id", r.id},
       {"uri", r.uri},
       {"width", r.width},
       {"height", r.height},
       {"caption", r.caption},
       {"aesthetic_score", r.aesthetic_score},
       {"clip_score", r.clip_score},
       {"ocr_word_count", r.ocr_word_count},
       {"engagement", r.engagement},
       {"concept", r.concept_label},
       {"stage", stage_name(r.stage)}};
  if (!r.curated_caption.empty()) j["curated_caption"] = r.curated_caption;
  if (!r.reason.empty()) j["reason"] = r.reason;
}

/// Strict parse; throws DataError on missing or mistyped fields.
inline void from_json(const nlohmann::json& j, ImageRecord& r) {
  if (!j.is_object()) throw DataError("image record must be a JSON object");
  try {
    r.id = j.at("id").get<std::string>();
    r.uri = j.value("uri", std::string{});
    r.width = j.at("width").get<int>();
    r.height = j.at("height").get<int>();
    r.caption = j.value("caption", std::string{});
    r.aesthetic_score = j.at("aesthetic_score").get<double>();
    r.clip_score = j.at("clip_score").get<double>();
    r.ocr_word_count = j.at("ocr_word_count").get<int>();
    r.engagement = j.at("engagement").get<double>();
    const auto c = j.value("concept", std::string{});
    r.concept_label = c.empty() ? "other" : c;
    r.stage = j.contains("stage") ? parse_stage(j.at("stage").get<std::string>()) : Stage::Pool;
    r.curated_caption = j.value("curated_caption", std::string{});
    r.reason = j.value("reason", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed image record: ") + e.what());
  }
}

struct ParsedRecords {
  std::vector<ImageRecord> records;
  /// Line numbers (1-based) and messages of rows that could not be parsed.
  std::vector<std::pair<std::size_t, std::string>> malformed;
};

/// Parses manifest rows; rows that fail to parse are reported rather than thrown.
inline ParsedRecords parse_records(const std::vector<nlohmann::json>& rows) {
  ParsedRecords out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      out.records.push_back(rows[i].get<ImageRecord>());
    } catch (const Error& e) {
      out.malformed.emplace_back(i + 1, e.what());
    }
  }
  return out;
}

}  // namespace curatune::curation
