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
#include <numbers>

#include "curatune/core/error.hpp"
#include "curatune/core/tensor.hpp"

namespace curatune::ae {

/// Number of output channels of fourier_lift for a 3-channel input.
constexpr int lifted_channels(int num_freqs) { return 3 + 6 * num_freqs; }

/// Non-learnable sinusoidal lift of an RGB image.
///
/// Input [3, H, W] or [N, 3, H, W] with values in [-1, 1]. Output channel
/// layout: the three input channels unchanged, then for each frequency
/// j = 0..num_freqs-1 six channels sin(2^j pi x_c) for c = 0..2 followed by
/// cos(2^j pi x_c) for c = 0..2.
template <class T>
Tensor<T> fourier_lift(const Tensor<T>& image, int num_freqs) {
  if (num_freqs < 0) throw ConfigError("fourier_num_freqs must be >= 0");
  const bool batched = image.rank() == 4;
  if (!(batched || image.rank() == 3) || image.dim(batched ? 1 : 0) != 3)
    throw ShapeError("fourier_lift expects [3,H,W] or [N,3,H,W], got " + shape_str(image.shape()));
  if (!image.all_finite()) throw DataError("fourier_lift: non-finite pixel value");
  const int N = batched ? image.dim(0) : 1;
  const std::size_t plane = static_cast<std::size_t>(image.dim(-2)) * image.dim(-1);
  const int Co = lifted_channels(num_freqs);
  Shape out_shape = image.shape();
  out_shape[batched ? 1 : 0] = Co;
  Tensor<T> out(out_shape);
  for (int n = 0; n < N; ++n) {
    const T* in = image.data() + static_cast<std::size_t>(n) * 3 * plane;
    T* o = out.data() + static_cast<std::size_t>(n) * Co * plane;
    std::copy(in, in + 3 * plane, o);
    for (int j = 0; j < num_freqs; ++j) {
      const double w = std::ldexp(std::numbers::pi, j);
      T* sin_block = o + static_cast<std::size_t>(3 + 6 * j) * plane;
      T* cos_block = sin_block + 3 * plane;
      for (std::size_t i = 0; i < 3 * plane; ++i) {
        const double arg = w * static_cast<double>(in[i]);
        sin_block[i] = static_cast<T>(std::sin(arg));
        cos_block[i] = static_cast<T>(std::cos(arg));
      }
    }
  }
  return out;
}

}  // namespace curatune::ae
