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

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "curatune/core/autograd.hpp"
#include "curatune/core/nn.hpp"
#include "curatune/image/image.hpp"

namespace curatune::ae {

/// PSNR with an explicit sentinel for identical inputs.
struct Psnr {
  double db = 0.0;
  bool infinite = false;

  static Psnr inf() { return {std::numeric_limits<double>::infinity(), true}; }
};

inline void to_json(nlohmann::json& j, const Psnr& p) {
  if (p.infinite)
    j = "inf";
  else
    j = p.db;
}

struct ReconMetrics {
  double ssim = 0.0;
  Psnr psnr;
  double fid = 0.0;
  /// Ridge added to the feature covariances; 0 when none was needed.
  double fid_epsilon = 0.0;
};

inline constexpr double kPixelRange = 2.0;  // images live in [-1, 1]

/// Mean SSIM over channels with an 11-tap Gaussian window (sigma 1.5), valid region only.
/// The window shrinks to the largest odd size that fits smaller images.
inline double ssim(const Image& a, const Image& b, double data_range = kPixelRange) {
  if (a.height != b.height || a.width != b.width) throw ShapeError("ssim: image sizes differ");
  int win = std::min({11, a.height, a.width});
  if (win % 2 == 0) --win;
  const double sigma = 1.5 * win / 11.0;
  std::vector<double> g(static_cast<std::size_t>(win));
  double gs = 0.0;
  for (int i = 0; i < win; ++i) {
    const double d = i - (win - 1) / 2.0;
    gs += (g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma)));
  }
  for (auto& v : g) v /= gs;
  const double c1 = std::pow(0.01 * data_range, 2), c2 = std::pow(0.03 * data_range, 2);
  const int Ho = a.height - win + 1, Wo = a.width - win + 1;
  double total = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < Ho; ++y)
      for (int x = 0; x < Wo; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const double w = g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(j)];
            const double va = a.at(c, y + i, x + j), vb = b.at(c, y + i, x + j);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      }
  return total / (3.0 * Ho * Wo);
}

inline double mse(const Image& a, const Image& b) {
  if (a.data.size() != b.data.size()) throw ShapeError("mse: image sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

inline Psnr psnr(const Image& a, const Image& b, double data_range = kPixelRange) {
  const double m = mse(a, b);
  if (m == 0.0) return Psnr::inf();
  return {10.0 * std::log10(data_range * data_range / m), false};
}

/// Maps an image to a fixed-length feature vector for FID.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<double> features(const Image& image) const = 0;
};

/// Fixed-weight two-layer conv net with global average pooling.
/// Weights come from a constant seed, so features are comparable across runs.
class DefaultFeatureExtractor final : public FeatureExtractor {
 public:
  DefaultFeatureExtractor() {
    Rng rng = make_rng(0x5EEDF1D, 0);
    c1_ = nn::Conv2d<double>(params_, "f.c1", 3, 16, 3, 2, rng);
    c2_ = nn::Conv2d<double>(params_, "f.c2", 16, 32, 3, 2, rng);
  }

  std::vector<double> features(const Image& image) const override {
    ag::NoGradGuard guard;
    const Tensor<double> x = images_to_tensor<double>(std::span<const Image>(&image, 1));
    auto h1 = ag::relu(c1_(ag::Var<double>(x)));
    auto h2 = ag::relu(c2_(h1));
    std::vector<double> out;
    for (const auto* t : {&h1.value(), &h2.value()}) {
      const int C = t->dim(1);
      const std::size_t plane = static_cast<std::size_t>(t->dim(2)) * t->dim(3);
      for (int c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += (*t)[c * plane + i];
        out.push_back(s / static_cast<double>(plane));
      }
    }
    return out;
  }

 private:
  nn::ParamSet<double> params_;
  nn::Conv2d<double> c1_, c2_;
};

struct FidResult {
  double fid = 0.0;
  double epsilon = 0.0;
};

/// Frechet distance between Gaussian fits of two feature sets.
/// Near-singular covariances get a ridge, reported in `epsilon` and logged.
inline FidResult frechet_distance(const std::vector<std::vector<double>>& fa, const std::vector<std::vector<double>>& fb) {
  if (fa.size() < 2 || fb.size() < 2) throw DataError("FID needs at least 2 images per set");
  const Eigen::Index D = static_cast<Eigen::Index>(fa.front().size());
  auto stats = [D](const std::vector<std::vector<double>>& f) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(f.size()), D);
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (static_cast<Eigen::Index>(f[i].size()) != D) throw ShapeError("FID feature length mismatch");
      X.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(f[i].data(), D);
    }
    Eigen::RowVectorXd mu = X.colwise().mean();
    Eigen::MatrixXd Xc = X.rowwise() - mu;
    Eigen::MatrixXd cov = (Xc.transpose() * Xc) / static_cast<double>(X.rows() - 1);
    return std::make_pair(mu, cov);
  };
  auto [mu_a, cov_a] = stats(fa);
  auto [mu_b, cov_b] = stats(fb);

  auto min_eig = [](const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return std::make_pair(es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff());
  };
  double eps = 0.0;
  for (const auto* cov : {&cov_a, &cov_b}) {
    auto [lo, hi] = min_eig(*cov);
    if (lo <= 1e-10 * std::max(hi, 1e-12)) eps = 1e-6;
  }
  if (eps > 0) {
    std::clog << "[fid] covariance near singular; adding epsilon=" << eps << " to the diagonal\n";
    cov_a += eps * Eigen::MatrixXd::Identity(D, D);
    cov_b += eps * Eigen::MatrixXd::Identity(D, D);
  }
  // tr sqrt(A B) = tr sqrt(A^1/2 B A^1/2) for symmetric PSD A, B.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(cov_a);
  Eigen::VectorXd la = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd sqrt_a = ea.eigenvectors() * la.asDiagonal() * ea.eigenvectors().transpose();
  Eigen::MatrixXd m = sqrt_a * cov_b * sqrt_a;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m, Eigen::EigenvaluesOnly);
  const double tr_sqrt = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double fid = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
  return {std::max(0.0, fid), eps};
}

inline ReconMetrics compute_recon_metrics(std::span<const Image> originals, std::span<const Image> reconstructions,
                                          const FeatureExtractor& extractor) {
  if (originals.size() != reconstructions.size())
    throw ShapeError("compute_recon_metrics: " + std::to_string(originals.size()) + " originals vs " +
                     std::to_string(reconstructions.size()) + " reconstructions");
  if (originals.empty()) throw DataError("compute_recon_metrics: empty image sets");
  ReconMetrics m;
  double ssim_sum = 0.0, psnr_sum = 0.0;
  bool any_inf = false;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    ssim_sum += ssim(originals[i], reconstructions[i]);
    const Psnr p = psnr(originals[i], reconstructions[i]);
    if (p.infinite)
      any_inf = true;
    else
      psnr_sum += p.db;
  }
  const double n = static_cast<double>(originals.size());
  m.ssim = ssim_sum / n;
  m.psnr = any_inf ? Psnr::inf() : Psnr{psnr_sum / n, false};
  std::vector<std::vector<double>> fa, fb;
  for (const auto& img : originals) fa.push_back(extractor.features(img));
  for (const auto& img : reconstructions) fb.push_back(extractor.features(img));
  const FidResult f = frechet_distance(fa, fb);
  m.fid = f.fid;
  m.fid_epsilon = f.epsilon;
  return m;
}

/// Reconstructs `images` through `model` in chunks and scores them.
template <class Model>
ReconMetrics evaluate_autoencoder(const Model& model, std::span<const Image> images, const FeatureExtractor& extractor,
                                  std::size_t chunk = 64) {
  using T = float;
  std::vector<Image> recons;
  recons.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); i += chunk) {
    const auto part = images.subspan(i, std::min(chunk, images.size() - i));
    const Tensor<T> x = images_to_tensor<T>(part);
    auto out = tensor_to_images(model.decode_batch(model.encode_batch(x)));
    for (auto& img : out) recons.push_back(std::move(img));
  }
  return compute_recon_metrics(images, recons, extractor);
}

}  // namespace curatune::ae
