// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace trivol {

struct NFSConfig {
  int histogram_bins = 64;  // B
  // The reference protocol draws 256 depth maps; nfs() scores whatever set
  // it is given.
  int sample_count = 256;
};

// Non-flatness score: per map, min-max normalize, histogram into B equal
// bins over [0,1], take exp(entropy); average over maps. Constant maps give
// 1 (a point-mass histogram), a perfectly uniform histogram gives B.
// Values exactly on an interior bin edge land in the higher bin.
inline double nfs(const std::vector<std::vector<double>>& depth_maps, const NFSConfig& cfg) {
  if (depth_maps.empty()) throw std::invalid_argument("nfs: empty depth-map list");
  const int B = cfg.histogram_bins;
  if (B < 2) throw std::invalid_argument("nfs: need at least 2 bins");

  double total = 0;
  for (const std::vector<double>& map : depth_maps) {
    if (map.empty()) throw std::invalid_argument("nfs: empty depth map");
    double lo = map[0], hi = map[0];
    for (double v : map) {
      if (!std::isfinite(v)) throw std::invalid_argument("nfs: non-finite depth");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    std::vector<std::size_t> hist(B, 0);
    if (hi == lo) {
      hist[0] = map.size();
    } else {
      const double inv = 1.0 / (hi - lo);
      for (double v : map) {
        int bin = static_cast<int>(std::floor((v - lo) * inv * B));
        if (bin >= B) bin = B - 1;  // right-inclusive last bin
        if (bin < 0) bin = 0;
        ++hist[bin];
      }
    }
    double entropy = 0;
    const double n = static_cast<double>(map.size());
    for (std::size_t count : hist) {
      if (count == 0) continue;
      const double p = count / n;
      entropy -= p * std::log(p);
    }
    total += std::exp(entropy);
  }
  return total / static_cast<double>(depth_maps.size());
}

// MSE between independently z-normalized maps (population statistics).
// Invariant under positive affine maps of either argument.
inline double depth_accuracy(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size() || pred.empty())
    throw std::invalid_argument("depth_accuracy: shape mismatch");
  const double n = static_cast<double>(pred.size());
  auto stats = [n](std::span<const double> m, double& mean, double& sd) {
    double s = 0;
    for (double v : m) s += v;
    mean = s / n;
    double var = 0;
    for (double v : m) var += (v - mean) * (v - mean);
    sd = std::sqrt(var / n);
    if (!(sd > 0.0)) throw std::domain_error("depth_accuracy: zero-variance depth map");
  };
  double mp, sp, mg, sg;
  stats(pred, mp, sp);
  stats(gt, mg, sg);
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = (pred[i] - mp) / sp - (gt[i] - mg) / sg;
    acc += d * d;
  }
  return acc / n;
}

// Masked variant: z-normalization and the error are both restricted to the
// selected pixels.
inline double depth_accuracy_masked(std::span<const double> pred, std::span<const double> gt,
                                    std::span<const std::uint8_t> mask) {
  if (pred.size() != gt.size() || pred.size() != mask.size())
    throw std::invalid_argument("depth_accuracy: shape mismatch");
  std::vector<double> p, g;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    p.push_back(pred[i]);
    g.push_back(gt[i]);
  }
  return depth_accuracy(p, g);
}

// Peak signal-to-noise ratio in dB, capped at 99 for near-exact matches.
inline double psnr(std::span<const double> pred, std::span<const double> gt, double peak = 1.0) {
  if (pred.size() != gt.size() || pred.empty())
    throw std::invalid_argument("psnr: shape mismatch");
  double mse = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gt[i];
    mse += d * d;
  }
  mse /= static_cast<double>(pred.size());
  if (mse < 1e-10) return 99.0;
  return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace trivol
