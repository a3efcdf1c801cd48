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
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "curatune/core/autograd.hpp"
#include "curatune/core/nn.hpp"
#include "curatune/core/random.hpp"

namespace curatune::testutil {

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("curatune_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  /// Per-coordinate (analytic, numeric) pairs, for diagnostics.
  std::vector<std::pair<double, double>> samples;
};

/// Compares analytic gradients of `loss()` against central finite differences
/// on `coords` deterministic pseudo-random parameter coordinates. Relative
/// error is |a - n| / max(|a|, |n|); pairs where both are below `abs_floor`
/// count as agreeing.
inline GradCheckResult grad_check(nn::ParamSet<double>& params, const std::function<ag::Var<double>()>& loss,
                                  int coords = 20, double h = 1e-6, std::uint64_t seed = 1, double abs_floor = 1e-10) {
  params.zero_grad();
  ag::backward(loss());
  std::vector<std::pair<std::size_t, std::size_t>> all;
  auto& entries = params.entries();
  for (std::size_t e = 0; e < entries.size(); ++e)
    for (std::size_t j = 0; j < entries[e].second.value().numel(); ++j) all.emplace_back(e, j);
  const auto perm = seeded_permutation(all.size(), seed, 0x6C);
  GradCheckResult r;
  for (int k = 0; k < coords && k < static_cast<int>(all.size()); ++k) {
    const auto [e, j] = all[perm[static_cast<std::size_t>(k)]];
    auto& var = entries[e].second;
    const double analytic = var.has_grad() ? var.grad()[j] : 0.0;
    const double orig = var.value()[j];
    double fp, fm;
    {
      ag::NoGradGuard g;
      var.mutable_value()[j] = orig + h;
      fp = loss().item();
      var.mutable_value()[j] = orig - h;
      fm = loss().item();
      var.mutable_value()[j] = orig;
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double rel = scale < abs_floor ? 0.0 : std::abs(analytic - numeric) / scale;
    r.max_rel_error = std::max(r.max_rel_error, rel);
    r.samples.emplace_back(analytic, numeric);
    ++r.checked;
  }
  return r;
}

}  // namespace curatune::testutil
