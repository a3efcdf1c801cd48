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
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curatune/core/error.hpp"
#include "curatune/core/random.hpp"

namespace curatune::eval {

inline constexpr const char* kSourceParti = "parti-like";
inline constexpr const char* kSourceOui = "open-user-input-like";

struct PromptRecord {
  std::string id;
  std::string text;
  std::string source;  // kSourceParti | kSourceOui
  std::string concept_category;
  bool stylized = false;

  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

inline void to_json(nlohmann::json& j, const PromptRecord& p) {
  j = {{"id", p.id}, {"text", p.text}, {"source", p.source}, {"concept_category", p.concept_category},
       {"stylized", p.stylized}};
}

inline void from_json(const nlohmann::json& j, PromptRecord& p) {
  try {
    p.id = j.at("id").get<std::string>();
    p.text = j.at("text").get<std::string>();
    p.source = j.at("source").get<std::string>();
    p.concept_category = j.at("concept_category").get<std::string>();
    p.stylized = j.value("stylized", false);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed prompt record: ") + e.what());
  }
}

/// Registered concept taxonomy with the repo's stand-in target histogram for
/// open-user-input-like prompts (fractions sum to 1).
inline const std::map<std::string, double>& default_taxonomy() {
  static const std::map<std::string, double> t{
      {"people", 0.20},        {"animals", 0.13},       {"landscape", 0.10},     {"objects", 0.09},
      {"food", 0.08},          {"art_illustration", 0.08}, {"architecture", 0.07}, {"fantasy", 0.07},
      {"vehicles", 0.05},      {"plants", 0.05},        {"indoor_scenes", 0.04}, {"abstract", 0.04}};
  return t;
}

/// Checks one prompt against the registered taxonomy and source enum.
inline void validate_prompt(const PromptRecord& p, const std::map<std::string, double>& taxonomy = default_taxonomy()) {
  if (p.id.empty()) throw DataError("prompt id must be nonempty");
  if (p.text.empty()) throw DataError("prompt " + p.id + " has empty text");
  if (p.source != kSourceParti && p.source != kSourceOui)
    throw DataError("prompt " + p.id + " has unknown source '" + p.source + "'");
  if (!taxonomy.count(p.concept_category))
    throw DataError("prompt " + p.id + " has unregistered concept category '" + p.concept_category + "'");
}

struct DistributionCheck {
  bool pass = false;
  double l1 = 0.0;
  std::map<std::string, double> empirical;
};

/// L1 distance between the empirical category distribution and `target`
/// (normalized to sum 1); passes when the distance is <= tolerance.
inline DistributionCheck validate_prompt_distribution(const std::vector<PromptRecord>& prompts,
                                                      const std::map<std::string, double>& target, double tolerance,
                                                      const std::map<std::string, double>& taxonomy = default_taxonomy()) {
  if (prompts.empty()) throw DataError("validate_prompt_distribution: no prompts");
  double total = 0.0;
  for (const auto& [c, w] : target) {
    if (!taxonomy.count(c)) throw DataError("target histogram has unknown category '" + c + "'");
    if (!(w >= 0.0)) throw DataError("target histogram weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw DataError("target histogram is empty");
  DistributionCheck out;
  for (const auto& [c, _] : taxonomy) out.empirical[c] = 0.0;
  for (const auto& p : prompts) {
    if (!taxonomy.count(p.concept_category))
      throw DataError("prompt " + p.id + " has unknown category '" + p.concept_category + "'");
    out.empirical[p.concept_category] += 1.0;
  }
  for (auto& [c, v] : out.empirical) {
    v /= static_cast<double>(prompts.size());
    const auto it = target.find(c);
    out.l1 += std::abs(v - (it == target.end() ? 0.0 : it->second / total));
  }
  out.pass = out.l1 <= tolerance;
  return out;
}

namespace detail {

inline const std::map<std::string, std::vector<std::string>>& category_subjects() {
  static const std::map<std::string, std::vector<std::string>> s{
      {"people", {"an old fisherman", "a street musician", "a child flying a kite", "a chef in an apron", "a dancer"}},
      {"animals", {"a corgi", "a red fox", "an owl on a branch", "a sleeping cat", "a herd of elephants"}},
      {"landscape", {"a misty mountain valley", "a desert at dusk", "a frozen lake", "rolling green hills", "a fjord"}},
      {"objects", {"a coffee mug", "an antique clock", "a pair of sneakers", "a stack of books", "a glass vase"}},
      {"food", {"a glass of orange juice", "a bowl of ramen", "a slice of cake", "fresh croissants", "a fruit tart"}},
      {"art_illustration", {"a poster of a city", "a portrait of a queen", "a bouquet", "a ship at sea", "a tiger"}},
      {"architecture", {"a gothic cathedral", "a glass skyscraper", "a wooden cabin", "a lighthouse", "a stone bridge"}},
      {"fantasy", {"a dragon over a castle", "a floating island", "a wizard's tower", "a crystal forest", "a phoenix"}},
      {"vehicles", {"a vintage car", "a red bicycle", "a steam locomotive", "a sailboat", "a motorcycle"}},
      {"plants", {"a potted fern", "a field of sunflowers", "a bonsai tree", "cherry blossoms", "a cactus"}},
      {"indoor_scenes", {"a cozy reading nook", "a sunlit kitchen", "a busy cafe", "a library hall", "a studio"}},
      {"abstract", {"swirling colors", "geometric shapes", "flowing ribbons of light", "fractal patterns", "ink drops"}},
  };
  return s;
}

inline const std::vector<std::string>& photo_modifiers() {
  static const std::vector<std::string> m{"at golden hour", "in soft morning light", "on a rainy evening",
                                          "with a shallow depth of field", "under a clear blue sky"};
  return m;
}

inline const std::vector<std::string>& style_modifiers() {
  static const std::vector<std::string> m{"as a pencil sketch", "as a cartoon", "in watercolor", "as an oil painting",
                                          "in pixel art style"};
  return m;
}

}  // namespace detail

/// Deterministic open-user-input-like prompt set. Category counts follow
/// `histogram` by largest-remainder allocation, so the empirical distribution
/// matches the target as closely as n allows. `stylized_fraction` of prompts
/// carry a non-photorealistic style modifier and the stylized tag.
inline std::vector<PromptRecord> generate_oui_like_prompts(std::size_t n, std::uint64_t seed,
                                                           double stylized_fraction = 0.15,
                                                           const std::map<std::string, double>& histogram =
                                                               default_taxonomy()) {
  double total = 0.0;
  for (const auto& [c, w] : histogram) {
    if (!detail::category_subjects().count(c)) throw DataError("no prompt templates for category '" + c + "'");
    total += w;
  }
  if (!(total > 0.0)) throw DataError("histogram is empty");
  // Largest-remainder allocation.
  std::vector<std::pair<std::string, std::size_t>> counts;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (const auto& [c, w] : histogram) {
    const double exact = w / total * static_cast<double>(n);
    const auto base = static_cast<std::size_t>(std::floor(exact));
    remainders.emplace_back(exact - static_cast<double>(base), counts.size());
    counts.emplace_back(c, base);
    assigned += base;
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[remainders[i % remainders.size()].second].second;

  std::vector<std::string> cats;
  for (const auto& [c, k] : counts) cats.insert(cats.end(), k, c);
  const auto perm = seeded_permutation(cats.size(), seed, 0x0E1);
  const auto n_styl = static_cast<std::size_t>(std::llround(stylized_fraction * static_cast<double>(n)));
  const auto styl_perm = seeded_permutation(n, seed, 0x571);
  std::vector<bool> stylized(n, false);
  for (std::size_t i = 0; i < n_styl && i < n; ++i) stylized[styl_perm[i]] = true;

  Rng rng = make_rng(seed, 0x7E47);
  std::vector<PromptRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& cat = cats[perm[i]];
    const auto& subjects = detail::category_subjects().at(cat);
    const auto& mods = stylized[i] ? detail::style_modifiers() : detail::photo_modifiers();
    const std::string& subject = subjects[rng() % subjects.size()];
    const std::string& mod = mods[rng() % mods.size()];
    char id[32];
    std::snprintf(id, sizeof id, "oui-%05zu", i);
    out.push_back({id, subject + " " + mod, kSourceOui, cat, stylized[i]});
  }
  return out;
}

}  // namespace curatune::eval
