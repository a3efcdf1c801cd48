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
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "curatune/core/error.hpp"
#include "curatune/core/tensor.hpp"

namespace curatune {

/// RGB image, channel-major [3, H, W], values in [-1, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  static constexpr int kChannels = 3;

  Image() = default;
  Image(int h, int w, float fill = 0.0f) : height(h), width(w), data(static_cast<std::size_t>(kChannels) * h * w, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  std::size_t numel() const { return data.size(); }

  friend bool operator==(const Image&, const Image&) = default;
};

inline float to_unit(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }
inline std::uint8_t to_byte(float v) {
  const float s = std::clamp((v + 1.0f) * 127.5f, 0.0f, 255.0f);
  return static_cast<std::uint8_t>(std::lround(s));
}

inline Image from_mat(const cv::Mat& bgr) {
  if (bgr.empty() || bgr.type() != CV_8UC3) throw DataError("expected an 8-bit 3-channel image");
  Image img(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y)
    for (int x = 0; x < bgr.cols; ++x) {
      const auto& px = bgr.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = to_unit(px[2 - c]);
    }
  return img;
}

inline cv::Mat to_mat(const Image& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      auto& px = bgr.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) px[2 - c] = to_byte(img.at(c, y, x));
    }
  return bgr;
}

inline Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFoundError("image not found: " + path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("corrupt or unsupported image data: " + path.string());
  return from_mat(m);
}

/// Decodes an in-memory encoded image (PNG, JPEG, ...).
inline Image decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw DataError("corrupt image data: empty buffer");
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat m = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("corrupt image data");
  return from_mat(m);
}

inline void save_png(const std::filesystem::path& path, const Image& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), to_mat(img))) throw DataError("cannot write image " + path.string());
}

/// Bicubic resampling; a no-op copy when already at the target size.
inline Image resize_bicubic(const Image& img, int height, int width) {
  if (height < 1 || width < 1) throw ShapeError("resize target must be at least 1x1");
  if (img.height < 1 || img.width < 1 || img.data.size() != static_cast<std::size_t>(3) * img.height * img.width)
    throw DataError("corrupt image data: inconsistent buffer");
  if (img.height == height && img.width == width) return img;
  Image out(height, width);
  for (int c = 0; c < 3; ++c) {
    cv::Mat src(img.height, img.width, CV_32FC1, const_cast<float*>(img.data.data() + static_cast<std::size_t>(c) * img.height * img.width));
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_CUBIC);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = std::clamp(dst.at<float>(y, x), -1.0f, 1.0f);
  }
  return out;
}

template <class T>
Tensor<T> images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw ShapeError("no images to batch");
  const int H = images.front().height, W = images.front().width;
  Tensor<T> t(Shape{static_cast<int>(images.size()), 3, H, W});
  std::size_t off = 0;
  for (const auto& img : images) {
    if (img.height != H || img.width != W) throw ShapeError("batch images must share one resolution");
    for (float v : img.data) t[off++] = static_cast<T>(v);
  }
  return t;
}

template <class T>
std::vector<Image> tensor_to_images(const Tensor<T>& t) {
  if (t.rank() != 4 || t.dim(1) != 3) throw ShapeError("expected [N,3,H,W], got " + shape_str(t.shape()));
  std::vector<Image> out;
  const int H = t.dim(2), W = t.dim(3);
  std::size_t off = 0;
  for (int n = 0; n < t.dim(0); ++n) {
    Image img(H, W);
    for (auto& v : img.data) v = static_cast<float>(t[off++]);
    out.push_back(std::move(img));
  }
  return out;
}

/// Tiles images row-major into a grid with `cols` columns.
inline Image make_grid(std::span<const Image> images, int cols) {
  if (images.empty()) return Image();
  const int H = images.front().height, W = images.front().width;
  cols = std::max(1, std::min<int>(cols, static_cast<int>(images.size())));
  const int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
  Image grid(rows * H, cols * W, -1.0f);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const int gy = static_cast<int>(i) / cols * H, gx = static_cast<int>(i) % cols * W;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) grid.at(c, gy + y, gx + x) = images[i].at(c, y, x);
  }
  return grid;
}

/// RMS contrast: standard deviation of luminance.
inline double rms_contrast(const Image& img) {
  const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
  if (n == 0) return 0.0;
  double s = 0.0, s2 = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double l = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
      s += l;
      s2 += l * l;
    }
  const double m = s / static_cast<double>(n);
  return std::sqrt(std::max(0.0, s2 / static_cast<double>(n) - m * m));
}

}  // namespace curatune
