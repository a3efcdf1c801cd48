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
#include <vector>

#include "curatune/core/error.hpp"
#include "curatune/core/nn.hpp"

namespace curatune::optim {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global L2 norm clip; <= 0 disables.
  double grad_clip = 1.0;
};

/// Adam over a ParamSet. Parameters without a gradient this step are skipped.
template <class T>
class Adam {
 public:
  Adam(nn::ParamSet<T>& params, AdamOptions options) : params_(&params), options_(options) {
    for (const auto& [_, p] : params.entries()) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }

  AdamOptions& options() { return options_; }
  long long steps_taken() const { return t_; }

  /// Returns the pre-clip global gradient norm. Throws on non-finite gradients.
  double step() {
    auto& entries = params_->entries();
    double sq = 0.0;
    for (auto& [_, p] : entries)
      if (p.has_grad())
        for (T g : p.grad().vec()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
    const double clip = (options_.grad_clip > 0 && norm > options_.grad_clip) ? options_.grad_clip / norm : 1.0;
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& p = entries[i].second;
      if (!p.has_grad()) continue;
      auto& val = p.mutable_value();
      const auto& g = p.grad();
      for (std::size_t j = 0; j < val.numel(); ++j) {
        const double gj = static_cast<double>(g[j]) * clip;
        double m = options_.beta1 * m_[i][j] + (1.0 - options_.beta1) * gj;
        double v = options_.beta2 * v_[i][j] + (1.0 - options_.beta2) * gj * gj;
        m_[i][j] = static_cast<T>(m);
        v_[i][j] = static_cast<T>(v);
        val[j] -= static_cast<T>(options_.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + options_.eps));
      }
    }
    params_->zero_grad();
    return norm;
  }

 private:
  nn::ParamSet<T>* params_;
  AdamOptions options_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  long long t_ = 0;
};

}  // namespace curatune::optim
