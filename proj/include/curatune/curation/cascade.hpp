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
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curatune/core/io.hpp"
#include "curatune/core/random.hpp"
#include "curatune/curation/record.hpp"
#include "curatune/image/image.hpp"

namespace curatune::curation {

struct CascadeConfig {
  double aesthetic_min = 0.5;
  double clip_min = 0.25;
  int ocr_max_words = 5;
  int min_side_px = 256;
  double aspect_min = 0.5;  // width / height
  double aspect_max = 2.0;
  /// concept -> max fraction of budget_auto. Empty means no per-concept caps.
  std::map<std::string, double> concept_quotas;
  /// Engagement pre-ranking keeps the top-k survivors before balancing; unset keeps all.
  std::optional<long long> engagement_top_k;
  long long budget_auto = 200000;
  long long budget_stage1 = 20000;
  long long budget_final = 2000;
  std::uint64_t seed = 0;
  /// Enables the offensive-content predicate. The shipped predicate is a
  /// pass-through stub; a real classifier must be injected.
  bool offensive_filter = false;
  /// Seconds an annotator's task claim stays valid.
  double claim_timeout_s = 600.0;

  void validate() const {
    for (double v : {aesthetic_min, clip_min, aspect_min, aspect_max})
      if (!std::isfinite(v)) throw ConfigError("filter thresholds must be finite");
    if (aspect_min > aspect_max) throw ConfigError("aspect_min must be <= aspect_max");
    if (budget_auto <= 0 || budget_stage1 <= 0 || budget_final <= 0) throw ConfigError("budgets must be positive");
    if (!(budget_auto > budget_stage1 && budget_stage1 > budget_final))
      throw ConfigError("budgets must be strictly decreasing: budget_auto > budget_stage1 > budget_final");
    for (const auto& [c, q] : concept_quotas)
      if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quota for concept '" + c + "' must be in [0, 1]");
    if (engagement_top_k && *engagement_top_k < 0) throw ConfigError("engagement_top_k must be >= 0");
    if (!(claim_timeout_s > 0)) throw ConfigError("claim_timeout_s must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const CascadeConfig& c) {
  j = {{"aesthetic_min", c.aesthetic_min},
       {"clip_min", c.clip_min},
       {"ocr_max_words", c.ocr_max_words},
       {"min_side_px", c.min_side_px},
       {"aspect_min", c.aspect_min},
       {"aspect_max", c.aspect_max},
       {"concept_quotas", c.concept_quotas},
       {"engagement_top_k", c.engagement_top_k ? nlohmann::json(*c.engagement_top_k) : nlohmann::json(nullptr)},
       {"budget_auto", c.budget_auto},
       {"budget_stage1", c.budget_stage1},
       {"budget_final", c.budget_final},
       {"seed", c.seed},
       {"offensive_filter", c.offensive_filter},
       {"claim_timeout_s", c.claim_timeout_s}};
}

inline void from_json(const nlohmann::json& j, CascadeConfig& c) {
  io::check_keys(j,
                 {"aesthetic_min", "clip_min", "ocr_max_words", "min_side_px", "aspect_min", "aspect_max",
                  "concept_quotas", "engagement_top_k", "budget_auto", "budget_stage1", "budget_final", "seed",
                  "offensive_filter", "claim_timeout_s"},
                 "cascade config");
  io::read_opt(j, "aesthetic_min", c.aesthetic_min);
  io::read_opt(j, "clip_min", c.clip_min);
  io::read_opt(j, "ocr_max_words", c.ocr_max_words);
  io::read_opt(j, "min_side_px", c.min_side_px);
  io::read_opt(j, "aspect_min", c.aspect_min);
  io::read_opt(j, "aspect_max", c.aspect_max);
  io::read_opt(j, "concept_quotas", c.concept_quotas);
  if (j.contains("engagement_top_k") && !j["engagement_top_k"].is_null())
    c.engagement_top_k = j["engagement_top_k"].get<long long>();
  io::read_opt(j, "budget_auto", c.budget_auto);
  io::read_opt(j, "budget_stage1", c.budget_stage1);
  io::read_opt(j, "budget_final", c.budget_final);
  io::read_opt(j, "seed", c.seed);
  io::read_opt(j, "offensive_filter", c.offensive_filter);
  io::read_opt(j, "claim_timeout_s", c.claim_timeout_s);
}

// ---------------------------------------------------------------------------
// Predicate filters

/// Pluggable offensive-content classifier; returns true when the record is acceptable.
using ContentPredicate = std::function<bool(const ImageRecord&)>;

/// Default offensive-content predicate: a stub that accepts everything.
inline bool offensive_content_stub(const ImageRecord&) { return true; }

struct Filter {
  std::string name;
  std::function<bool(const ImageRecord&)> pass;
};

/// Filters in declared order. Boundaries are inclusive.
inline std::vector<Filter> make_filters(const CascadeConfig& c, ContentPredicate offensive = offensive_content_stub) {
  std::vector<Filter> f{
      {"aesthetic", [t = c.aesthetic_min](const ImageRecord& r) { return r.aesthetic_score >= t; }},
      {"clip", [t = c.clip_min](const ImageRecord& r) { return r.clip_score >= t; }},
      {"ocr", [t = c.ocr_max_words](const ImageRecord& r) { return r.ocr_word_count <= t; }},
      {"min_side", [t = c.min_side_px](const ImageRecord& r) { return std::min(r.width, r.height) >= t; }},
      {"aspect",
       [lo = c.aspect_min, hi = c.aspect_max](const ImageRecord& r) {
         const double a = static_cast<double>(r.width) / r.height;
         return a >= lo && a <= hi;
       }},
  };
  if (c.offensive_filter) f.push_back({"offensive", std::move(offensive)});
  return f;
}

struct FilterResult {
  std::vector<ImageRecord> survivors;
  /// (id, reason) per rejected record, input order.
  std::vector<std::pair<std::string, std::string>> rejected;
  /// reason -> count; every filter name appears (possibly 0), plus "malformed".
  std::map<std::string, long long> rejection_counts;
};

/// A record survives iff it is well formed and passes every filter. Rejections
/// are attributed to the first failing filter in `filters` order.
inline FilterResult apply_predicate_filters(const std::vector<ImageRecord>& records, const std::vector<Filter>& filters) {
  FilterResult out;
  out.rejection_counts["malformed"] = 0;
  for (const auto& f : filters) out.rejection_counts[f.name] = 0;
  for (const auto& r : records) {
    std::string reason;
    if (!r.well_formed()) {
      reason = "malformed";
    } else {
      for (const auto& f : filters)
        if (!f.pass(r)) {
          reason = f.name;
          break;
        }
    }
    if (reason.empty()) {
      out.survivors.push_back(r);
    } else {
      ++out.rejection_counts[reason];
      out.rejected.emplace_back(r.id, reason);
    }
  }
  return out;
}

inline FilterResult apply_predicate_filters(const std::vector<ImageRecord>& records, const CascadeConfig& config) {
  config.validate();
  return apply_predicate_filters(records, make_filters(config));
}

// ---------------------------------------------------------------------------
// Ranking and balancing

/// Stable descending sort by engagement, ties by id ascending; first k.
inline std::vector<ImageRecord> rank_by_engagement(std::vector<ImageRecord> records, long long k) {
  if (k < 0) throw ConfigError("rank_by_engagement: k must be >= 0");
  std::stable_sort(records.begin(), records.end(), [](const ImageRecord& a, const ImageRecord& b) {
    if (a.engagement != b.engagement) return a.engagement > b.engagement;
    return a.id < b.id;
  });
  if (static_cast<long long>(records.size()) > k) records.resize(static_cast<std::size_t>(k));
  return records;
}

/// Per-concept cap ceil(quota * budget); a tiny slack absorbs binary rounding
/// of products such as 0.07 * 100.
inline long long concept_cap(double quota, long long budget) {
  return static_cast<long long>(std::ceil(quota * static_cast<double>(budget) - 1e-9));
}

/// Deterministic selection under per-concept caps and a global budget.
/// Order: engagement descending, then a seeded hash of the id, then id.
/// Concepts missing from a non-empty quota map get cap 0; an empty map means
/// no per-concept caps. Output is in selection order.
inline std::vector<ImageRecord> balance_concepts(const std::vector<ImageRecord>& records,
                                                 const std::map<std::string, double>& quotas, long long budget,
                                                 std::uint64_t seed) {
  if (budget <= 0) throw ConfigError("balance_concepts: budget must be > 0");
  std::vector<const ImageRecord*> order;
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [seed](const ImageRecord* a, const ImageRecord* b) {
    if (a->engagement != b->engagement) return a->engagement > b->engagement;
    const auto ha = hash_string(a->id, seed), hb = hash_string(b->id, seed);
    if (ha != hb) return ha < hb;
    return a->id < b->id;
  });
  std::map<std::string, long long> taken;
  std::vector<ImageRecord> out;
  for (const ImageRecord* r : order) {
    if (static_cast<long long>(out.size()) >= budget) break;
    const std::string concept_name = r->concept_label.empty() ? "other" : r->concept_label;
    if (!quotas.empty()) {
      auto it = quotas.find(concept_name);
      const long long cap = it == quotas.end() ? 0 : concept_cap(it->second, budget);
      if (taken[concept_name] >= cap) continue;
    }
    ++taken[concept_name];
    out.push_back(*r);
  }
  return out;
}

struct CascadeResult {
  /// Every input record with its updated stage and reason, sorted by id.
  std::vector<ImageRecord> records;
  std::map<std::string, long long> rejection_counts;
  long long survivors = 0;
  long long ranked = 0;
  long long auto_passed = 0;
};

/// Full automatic stage: predicate filters -> engagement ranking -> concept
/// balancing to budget_auto. Passing records move POOL -> AUTO_PASSED.
inline CascadeResult run_auto_cascade(std::vector<ImageRecord> records, const CascadeConfig& config,
                                      ContentPredicate offensive = offensive_content_stub) {
  config.validate();
  for (const auto& r : records)
    if (r.stage != Stage::Pool) throw StateError("record " + r.id + " is not in POOL");
  const FilterResult f = apply_predicate_filters(records, make_filters(config, std::move(offensive)));
  std::vector<ImageRecord> ranked =
      config.engagement_top_k ? rank_by_engagement(f.survivors, *config.engagement_top_k) : f.survivors;
  const auto balanced = balance_concepts(ranked, config.concept_quotas, config.budget_auto, config.seed);
  std::set<std::string> passed;
  for (const auto& r : balanced) passed.insert(r.id);
  std::set<std::string> survived;
  for (const auto& r : ranked) survived.insert(r.id);
  std::map<std::string, std::string> reasons(f.rejected.begin(), f.rejected.end());
  CascadeResult out;
  out.rejection_counts = f.rejection_counts;
  out.rejection_counts["engagement"] = static_cast<long long>(f.survivors.size() - ranked.size());
  out.rejection_counts["balance"] = static_cast<long long>(ranked.size() - balanced.size());
  for (auto& r : records) {
    if (passed.count(r.id)) {
      r.stage = Stage::AutoPassed;
      r.reason.clear();
    } else if (auto it = reasons.find(r.id); it != reasons.end()) {
      r.reason = it->second;
    } else {
      r.reason = survived.count(r.id) ? "balance" : "engagement";
    }
  }
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].id == records[i - 1].id) throw DataError("duplicate record id " + records[i].id);
  out.records = std::move(records);
  out.survivors = static_cast<long long>(f.survivors.size());
  out.ranked = static_cast<long long>(ranked.size());
  out.auto_passed = static_cast<long long>(balanced.size());
  return out;
}

// ---------------------------------------------------------------------------
// Resampling

/// Center-crops to a square and bicubically resamples to target x target.
/// Images already at the target size are returned unchanged.
inline Image resize_to_target(const Image& image, int target) {
  if (target < 1) throw ConfigError("resize target must be >= 1");
  if (image.height < 1 || image.width < 1 || image.data.size() != static_cast<std::size_t>(3) * image.height * image.width)
    throw DataError("corrupt image data");
  if (image.height == target && image.width == target) return image;
  const int side = std::min(image.height, image.width);
  const int y0 = (image.height - side) / 2, x0 = (image.width - side) / 2;
  Image crop(side, side);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) crop.at(c, y, x) = image.at(c, y + y0, x + x0);
  return resize_bicubic(crop, target, target);
}

/// Decodes encoded image bytes (e.g. PNG) and resizes; undecodable bytes are a DataError.
inline Image resize_to_target(std::span<const std::uint8_t> encoded, int target) {
  return resize_to_target(decode_image(encoded), target);
}

}  // namespace curatune::curation
