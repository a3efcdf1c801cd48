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

// Single-file checkpoint archive.
//
// Layout (little endian):
//   8 bytes   magic "CTCKPT01"
//   8 bytes   header length L
//   L bytes   JSON header: {"kind", "config", "step", "meta", "tensors": [{"name", "shape", "offset"}]}
//   ...       float32 tensor payload; "offset" counts floats from the payload start

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curatune/core/error.hpp"
#include "curatune/core/nn.hpp"

namespace curatune {

static_assert(std::endian::native == std::endian::little, "archive format assumes a little-endian host");

using Bytes = std::vector<std::uint8_t>;

class Archive {
 public:
  static constexpr char kMagic[9] = "CTCKPT01";

  std::string kind;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json meta = nlohmann::json::object();
  std::int64_t step = 0;

  template <class T>
  void put(const std::string& name, const Tensor<T>& t) {
    if (find(name) >= 0) throw ConfigError("duplicate archive tensor " + name);
    entries_.push_back({name, t.shape(), std::vector<float>(t.vec().begin(), t.vec().end())});
  }

  template <class T>
  void put_params(const nn::ParamSet<T>& params, const std::string& prefix = "") {
    for (const auto& [name, var] : params.entries()) put(prefix + name, var.value());
  }

  bool contains(const std::string& name) const { return find(name) >= 0; }

  template <class T>
  Tensor<T> get(const std::string& name) const {
    const int i = find(name);
    if (i < 0) throw NotFoundError("archive has no tensor " + name);
    const auto& e = entries_[static_cast<std::size_t>(i)];
    return Tensor<T>(e.shape, std::vector<T>(e.data.begin(), e.data.end()));
  }

  /// Loads every parameter of `params` from tensors named prefix + name.
  template <class T>
  void get_params(nn::ParamSet<T>& params, const std::string& prefix = "") const {
    for (auto& [name, var] : params.entries()) {
      Tensor<T> t = get<T>(prefix + name);
      if (t.shape() != var.shape())
        throw ShapeError("checkpoint tensor " + prefix + name + " has shape " + shape_str(t.shape()) + ", model expects " +
                         shape_str(var.shape()));
      var.mutable_value() = std::move(t);
    }
  }

  Bytes serialize() const {
    nlohmann::json header;
    header["kind"] = kind;
    header["config"] = config;
    header["meta"] = meta;
    header["step"] = step;
    header["tensors"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& e : entries_) {
      header["tensors"].push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}});
      offset += e.data.size();
    }
    const std::string text = header.dump();
    Bytes out(8 + 8 + text.size() + offset * sizeof(float));
    std::memcpy(out.data(), kMagic, 8);
    const std::uint64_t len = text.size();
    std::memcpy(out.data() + 8, &len, 8);
    std::memcpy(out.data() + 16, text.data(), text.size());
    std::uint8_t* payload = out.data() + 16 + text.size();
    for (const auto& e : entries_) {
      std::memcpy(payload, e.data.data(), e.data.size() * sizeof(float));
      payload += e.data.size() * sizeof(float);
    }
    return out;
  }

  static Archive deserialize(const Bytes& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw DataError("not a curatune checkpoint");
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 8);
    if (16 + len > bytes.size()) throw DataError("truncated checkpoint header");
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("corrupt checkpoint header: ") + e.what());
    }
    Archive a;
    a.kind = header.at("kind").get<std::string>();
    a.config = header.at("config");
    a.meta = header.value("meta", nlohmann::json::object());
    a.step = header.at("step").get<std::int64_t>();
    const std::uint8_t* payload = bytes.data() + 16 + len;
    const std::size_t payload_floats = (bytes.size() - 16 - len) / sizeof(float);
    for (const auto& t : header.at("tensors")) {
      Entry e{t.at("name").get<std::string>(), t.at("shape").get<Shape>(), {}};
      const std::size_t off = t.at("offset").get<std::size_t>();
      const std::size_t n = shape_numel(e.shape);
      if (off + n > payload_floats) throw DataError("truncated checkpoint payload at " + e.name);
      e.data.resize(n);
      std::memcpy(e.data.data(), payload + off * sizeof(float), n * sizeof(float));
      a.entries_.push_back(std::move(e));
    }
    return a;
  }

  void save(const std::filesystem::path& path) const {
    const Bytes bytes = serialize();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }

  static Archive load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw NotFoundError("cannot open checkpoint " + path.string());
    Bytes bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
  }

 private:
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<float> data;
  };

  int find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  std::vector<Entry> entries_;
};

}  // namespace curatune
