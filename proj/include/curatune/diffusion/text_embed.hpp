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

#include <cctype>
#include <cmath>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "curatune/core/random.hpp"
#include "curatune/core/tensor.hpp"

namespace curatune::diffusion {

/// Maps a prompt to a token-embedding sequence [max_tokens, dim].
/// Implementations must be deterministic and thread-safe.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual int dim() const = 0;
  virtual int max_tokens() const = 0;
  virtual Tensor<float> encode(std::string_view text) const = 0;
};

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Deterministic hashed bag-of-tokens embedding: every token maps to a fixed
/// pseudo-random vector derived from hash(token, salt). Unused rows are zero.
class HashedBagEncoder final : public TextEncoder {
 public:
  HashedBagEncoder(int dim, int max_tokens, std::uint64_t salt) : dim_(dim), max_tokens_(max_tokens), salt_(salt) {
    if (dim < 1 || max_tokens < 1) throw ConfigError("text encoder dim and max_tokens must be >= 1");
  }

  int dim() const override { return dim_; }
  int max_tokens() const override { return max_tokens_; }

  Tensor<float> encode(std::string_view text) const override {
    Tensor<float> out(Shape{max_tokens_, dim_});
    const auto tokens = tokenize(text);
    const std::size_t n = std::min(tokens.size(), static_cast<std::size_t>(max_tokens_));
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim_)));
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(hash_string(tokens[i], salt_));
      for (int d = 0; d < dim_; ++d) out[i * dim_ + d] = static_cast<float>(normal(rng));
    }
    return out;
  }

 private:
  int dim_;
  int max_tokens_;
  std::uint64_t salt_;
};

/// Salts distinguishing the two conditioning slots.
inline constexpr std::uint64_t kSlotASalt = 0xC11F;
inline constexpr std::uint64_t kSlotBSalt = 0x75;

}  // namespace curatune::diffusion
