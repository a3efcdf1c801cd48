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

// Procedural shape/texture images for toy-scale training and tests.

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "curatune/core/random.hpp"
#include "curatune/image/image.hpp"

namespace curatune::synth {

struct Options {
  int size = 32;
  double contrast_min = 0.15;
  double contrast_max = 1.0;
};

struct Sample {
  Image image;
  std::string caption;
  std::string concept_label;
  double contrast = 1.0;
};

namespace detail {

struct Palette {
  const char* name;
  std::array<float, 3> rgb;
};

inline constexpr std::array<Palette, 8> kColors{{{"red", {0.9f, -0.7f, -0.6f}},
                                                {"green", {-0.6f, 0.8f, -0.5f}},
                                                {"blue", {-0.7f, -0.4f, 0.9f}},
                                                {"yellow", {0.9f, 0.8f, -0.8f}},
                                                {"purple", {0.4f, -0.7f, 0.7f}},
                                                {"orange", {0.95f, 0.1f, -0.8f}},
                                                {"white", {0.9f, 0.9f, 0.9f}},
                                                {"black", {-0.9f, -0.9f, -0.85f}}}};

inline constexpr std::array<const char*, 5> kShapes{"circle", "square", "triangle", "ring", "cross"};

}  // namespace detail

/// Generates image `index` of the stream identified by `seed`.
inline Sample make_sample(std::uint64_t seed, std::uint64_t index, const Options& opt = {}) {
  using detail::kColors;
  using detail::kShapes;
  Rng rng = make_rng(seed, index);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(U(rng) * static_cast<double>(n)) % n; };
  const int S = opt.size;
  Image img(S, S);

  // Background: a tinted sinusoidal texture with random orientation and frequency.
  const auto& bg = kColors[pick(kColors.size())];
  const double theta = U(rng) * std::numbers::pi;
  const double freq = 1.0 + U(rng) * 5.0;
  const double phase = U(rng) * 2.0 * std::numbers::pi;
  const double tex_amp = 0.15 + 0.35 * U(rng);
  const bool checker = U(rng) < 0.3;
  const int cell = 2 + static_cast<int>(pick(5));
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double u = (x + 0.5) / S, v = (y + 0.5) / S;
      double t;
      if (checker)
        t = ((x / cell + y / cell) % 2) ? 1.0 : -1.0;
      else
        t = std::sin(2.0 * std::numbers::pi * freq * (u * std::cos(theta) + v * std::sin(theta)) + phase);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(0.5 * bg.rgb[c] + tex_amp * t);
    }

  const int n_objects = 1 + static_cast<int>(pick(3));
  std::string caption;
  std::string concept_label;
  for (int k = 0; k < n_objects; ++k) {
    const auto& col = kColors[pick(kColors.size())];
    const std::size_t shape = pick(kShapes.size());
    const double cx = 0.2 + 0.6 * U(rng), cy = 0.2 + 0.6 * U(rng);
    const double r = 0.08 + 0.2 * U(rng);
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const double u = (x + 0.5) / S - cx, v = (y + 0.5) / S - cy;
        const double d = std::sqrt(u * u + v * v);
        bool inside = false;
        switch (shape) {
          case 0: inside = d < r; break;
          case 1: inside = std::abs(u) < r && std::abs(v) < r; break;
          case 2: inside = v < r && v > -r && std::abs(u) < (r - v) * 0.5; break;
          case 3: inside = d < r && d > 0.55 * r; break;
          default: inside = (std::abs(u) < r && std::abs(v) < 0.3 * r) || (std::abs(v) < r && std::abs(u) < 0.3 * r); break;
        }
        if (inside)
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = col.rgb[c];
      }
    if (k == 0) concept_label = kShapes[shape];
    caption += (k ? " and a " : "a ") + std::string(col.name) + " " + kShapes[shape];
  }
  caption += std::string(" on a ") + bg.name + (checker ? " checkerboard" : " striped") + " background";

  // Contrast: scale deviations from the per-channel mean.
  const double contrast = opt.contrast_min + (opt.contrast_max - opt.contrast_min) * U(rng);
  for (int c = 0; c < 3; ++c) {
    double m = 0.0;
    for (int i = 0; i < S * S; ++i) m += img.data[static_cast<std::size_t>(c) * S * S + i];
    m /= S * S;
    for (int i = 0; i < S * S; ++i) {
      float& p = img.data[static_cast<std::size_t>(c) * S * S + i];
      p = static_cast<float>(std::clamp(m + contrast * (p - m), -1.0, 1.0));
    }
  }
  return {std::move(img), std::move(caption), std::move(concept_label), contrast};
}

inline std::vector<Sample> make_dataset(std::uint64_t seed, std::size_t count, const Options& opt = {}) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_sample(seed, i, opt));
  return out;
}

inline std::vector<Image> images_of(const std::vector<Sample>& samples) {
  std::vector<Image> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.image);
  return out;
}

}  // namespace curatune::synth
