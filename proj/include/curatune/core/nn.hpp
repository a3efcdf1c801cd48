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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "curatune/core/autograd.hpp"
#include "curatune/core/random.hpp"
#include "curatune/core/tensor.hpp"

namespace curatune::nn {

using ag::Var;

/// Ordered registry of named trainable tensors.
template <class T>
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(ParamSet&&) noexcept = default;
  ParamSet& operator=(ParamSet&&) noexcept = default;
  // Copies would alias the same parameter nodes.
  ParamSet(const ParamSet&) = delete;
  ParamSet& operator=(const ParamSet&) = delete;

  Var<T> add(const std::string& name, Tensor<T> init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = params_.size();
    params_.emplace_back(name, Var<T>(std::move(init), true));
    return params_.back().second;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value().numel();
    return n;
  }

  std::vector<std::pair<std::string, Var<T>>>& entries() { return params_; }
  const std::vector<std::pair<std::string, Var<T>>>& entries() const { return params_; }

  Var<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw NotFoundError("no parameter named " + name);
    return params_[it->second].second;
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  /// Overwrites values from another set with identical names and shapes.
  void copy_values_from(const ParamSet& other) {
    if (other.params_.size() != params_.size()) throw ShapeError("parameter set size mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].first != other.params_[i].first ||
          params_[i].second.shape() != other.params_[i].second.shape())
        throw ShapeError("parameter mismatch at " + params_[i].first);
      params_[i].second.mutable_value() = other.params_[i].second.value();
    }
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

template <class T>
Tensor<T> lecun_normal(Shape shape, int fan_in, Rng& rng, double gain = 1.0) {
  Tensor<T> t(std::move(shape));
  fill_normal(t, rng, gain / std::sqrt(static_cast<double>(fan_in)));
  return t;
}

template <class T>
struct Conv2d {
  Var<T> weight;
  Var<T> bias;
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(ParamSet<T>& params, const std::string& name, int in, int out, int kernel, int stride_, Rng& rng,
         double gain = 1.0)
      : stride(stride_), pad(kernel / 2) {
    weight = params.add(name + ".weight", lecun_normal<T>({out, in, kernel, kernel}, in * kernel * kernel, rng, gain));
    bias = params.add(name + ".bias", Tensor<T>(Shape{out}));
  }

  Var<T> operator()(const Var<T>& x) const { return ag::conv2d(x, weight, bias, stride, pad); }

  static std::size_t param_count(int in, int out, int kernel) {
    return static_cast<std::size_t>(out) * in * kernel * kernel + out;
  }
};

template <class T>
struct Linear {
  Var<T> weight;
  Var<T> bias;

  Linear() = default;
  Linear(ParamSet<T>& params, const std::string& name, int in, int out, Rng& rng, double gain = 1.0) {
    weight = params.add(name + ".weight", lecun_normal<T>({in, out}, in, rng, gain));
    bias = params.add(name + ".bias", Tensor<T>(Shape{out}));
  }

  Var<T> operator()(const Var<T>& x) const { return ag::linear(x, weight, bias); }

  static std::size_t param_count(int in, int out) { return static_cast<std::size_t>(in) * out + out; }
};

}  // namespace curatune::nn
