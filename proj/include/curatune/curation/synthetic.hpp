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
#include <cstdio>
#include <string>
#include <vector>

#include "curatune/core/random.hpp"
#include "curatune/curation/record.hpp"

namespace curatune::curation {

/// Random POOL records for exercising the cascade. Scores are quantized
/// (aesthetic and clip to 0.01, engagement to 0.1) so that threshold
/// boundaries and engagement ties occur with realistic frequency.
inline std::vector<ImageRecord> synthetic_records(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> concepts{"people", "animals", "food", "landscape", "architecture", "objects"};
  Rng rng = make_rng(seed, 0x2EC);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto q = [](double v, double step) { return std::round(v / step) * step; };
  std::vector<ImageRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "rec-%06zu", i);
    ImageRecord r;
    r.id = id;
    r.width = 128 + static_cast<int>(U(rng) * 1920);
    r.height = 128 + static_cast<int>(U(rng) * 1920);
    r.caption = "synthetic record " + std::to_string(i);
    r.aesthetic_score = q(U(rng), 0.01);
    r.clip_score = q(0.5 * U(rng), 0.01);
    r.ocr_word_count = static_cast<int>(U(rng) * 12);
    r.engagement = q(std::exp(4.0 * U(rng)), 0.1);
    r.concept_label = concepts[static_cast<std::size_t>(U(rng) * concepts.size()) % concepts.size()];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace curatune::curation
