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

#include <filesystem>
#include <string>
#include <vector>

#include "curatune/core/io.hpp"
#include "curatune/image/image.hpp"

namespace curatune {

struct CaptionedImage {
  std::string id;
  Image image;
  std::string caption;
};

/// Resolves a manifest uri: absolute paths are kept, relative ones are taken
/// relative to the manifest's directory.
inline std::filesystem::path resolve_uri(const std::filesystem::path& manifest, const std::string& uri) {
  std::filesystem::path p(uri);
  if (p.is_absolute()) return p;
  return manifest.parent_path() / p;
}

/// Loads a JSONL image manifest (one record per line with "id", "uri" and
/// "caption"). With prefer_curated, a nonempty "curated_caption" replaces the
/// source caption.
inline std::vector<CaptionedImage> load_captioned_images(const std::filesystem::path& manifest,
                                                         bool prefer_curated = false) {
  std::vector<CaptionedImage> out;
  const auto rows = io::read_jsonl(manifest);
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (!r.contains("uri") || !r["uri"].is_string())
      throw DataError(manifest.string() + ":" + std::to_string(i + 1) + ": record has no string uri");
    CaptionedImage ci;
    ci.id = r.contains("id") ? r["id"].get<std::string>() : std::to_string(i);
    ci.caption = r.value("caption", std::string{});
    if (prefer_curated && r.contains("curated_caption") && r["curated_caption"].is_string() &&
        !r["curated_caption"].get<std::string>().empty())
      ci.caption = r["curated_caption"].get<std::string>();
    ci.image = load_image(resolve_uri(manifest, r["uri"].get<std::string>()));
    out.push_back(std::move(ci));
  }
  return out;
}

}  // namespace curatune
