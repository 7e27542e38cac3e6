// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "trivol/rng.hpp"
#include "trivol/schedule.hpp"
#include "trivol/tape.hpp"

namespace trivol {

template <class T>
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<T> v;

  Image() = default;
  Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(static_cast<std::size_t>(h_) * w_ * c_) {}

  T& at(int y, int x, int ch) { return v[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
  const T& at(int y, int x, int ch) const {
    return v[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  bool same_shape(int h2, int w2, int c2) const { return h == h2 && w == w2 && c == c2; }
};

using ImageD = Image<double>;
using ImageV = Image<Var>;

// Mean squared error over all pixels and channels.
template <class R>
R loss_recon(const Image<R>& pred, const ImageD& gt) {
  if (!gt.same_shape(pred.h, pred.w, pred.c))
    throw std::invalid_argument("loss_recon: shape mismatch");
  const std::size_t n = pred.v.size();
  if (n == 0) throw std::invalid_argument("loss_recon: empty image");
  R acc = vpow2(pred.v[0] - gt.v[0]);
  for (std::size_t i = 1; i < n; ++i) acc = acc + vpow2(pred.v[i] - gt.v[i]);
  return acc * (1.0 / static_cast<double>(n));
}

// L1 depth loss over pixels whose opacity clears the mask threshold; rays
// that hit nothing carry no depth signal. Empty mask -> no term (treated
// as zero by the caller).
template <class R>
std::optional<R> loss_depth_masked(std::span<const R> pred, std::span<const double> gt,
                                   std::span<const double> opacity, double threshold = 0.5) {
  if (pred.size() != gt.size() || pred.size() != opacity.size())
    throw std::invalid_argument("loss_depth: shape mismatch");
  std::optional<R> acc;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (opacity[i] < threshold) continue;
    R term = vabs(pred[i] - gt[i]);
    acc = acc ? *acc + term : term;
    ++count;
  }
  if (!acc) return std::nullopt;
  return *acc * (1.0 / static_cast<double>(count));
}

inline double loss_depth(std::span<const double> pred, std::span<const double> gt,
                         std::span<const double> opacity, double threshold = 0.5) {
  auto r = loss_depth_masked(pred, gt, opacity, threshold);
  return r ? *r : 0.0;
}

// Anisotropic total variation of a depth map, normalized by pixel count.
template <class R>
R loss_tv(int h, int w, std::span<const R> depth) {
  if (h < 1 || w < 1 || depth.size() != static_cast<std::size_t>(h) * w)
    throw std::invalid_argument("loss_tv: bad shape");
  std::optional<R> acc;
  auto add = [&](R term) { acc = acc ? *acc + term : term; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w) add(vabs(depth[i + 1] - depth[i]));
      if (y + 1 < h) add(vabs(depth[i + w] - depth[i]));
    }
  if (!acc) {
    // single pixel: no neighbor pairs
    return depth[0] * 0.0;
  }
  return *acc * (1.0 / (static_cast<double>(h) * w));
}

// Multi-level feature maps for perceptual losses. Implementations must be
// deterministic and expose at least two levels. extract() is provided for
// both evaluation modes so losses can be differentiated end to end.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int levels() const = 0;
  virtual std::vector<ImageD> extract(const ImageD& img) const = 0;
  virtual std::vector<ImageV> extract(const ImageV& img, Tape& tape) const = 0;
};

// Stand-in for a pretrained perceptual backbone: a frozen, seed-determined
// stack of 3x3 stride-2 convolutions with tanh between levels.
class ConvStackExtractor final : public FeatureExtractor {
 public:
  ConvStackExtractor(int levels, int features, std::uint64_t seed)
      : n_levels_(levels), features_(features) {
    if (levels < 2) throw std::invalid_argument("extractor needs at least 2 levels");
    int in_ch = 3;
    for (int l = 0; l < levels; ++l) {
      Layer layer;
      layer.in_ch = in_ch;
      layer.weights.resize(static_cast<std::size_t>(features) * in_ch * 9);
      Rng rng(mix_seed(seed, rng_stream::kFeatureNet, static_cast<std::uint64_t>(l)));
      const double bound = 1.0 / std::sqrt(9.0 * in_ch);
      for (double& w : layer.weights) w = rng.uniform(-bound, bound);
      layers_.push_back(std::move(layer));
      in_ch = features;
    }
  }

  int levels() const override { return n_levels_; }
  int features() const { return features_; }

  std::vector<ImageD> extract(const ImageD& img) const override { return extract_impl(img); }
  std::vector<ImageV> extract(const ImageV& img, Tape&) const override {
    return extract_impl(img);
  }

  // Raw kernel access so tests can run an independent convolution oracle.
  double kernel_weight(int level, int out, int in, int ky, int kx) const {
    return layers_[level].weight(out, in, ky, kx);
  }
  int layer_inputs(int level) const { return layers_[level].in_ch; }

 private:
  struct Layer {
    int in_ch = 0;
    std::vector<double> weights;  // [out][in][ky][kx]
    double weight(int out, int in, int ky, int kx) const {
      return weights[((static_cast<std::size_t>(out) * in_ch + in) * 3 + ky) * 3 + kx];
    }
  };

  template <class R>
  std::vector<Image<R>> extract_impl(const Image<R>& img) const {
    if (img.c != 3) throw std::invalid_argument("extractor expects rgb input");
    if (img.h < 1 || img.w < 1) throw std::invalid_argument("extractor: empty image");
    std::vector<Image<R>> out;
    Image<R> cur = img;
    for (const Layer& layer : layers_) {
      const int oh = (cur.h + 1) / 2, ow = (cur.w + 1) / 2;
      Image<R> next(oh, ow, features_);
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          for (int f = 0; f < features_; ++f) {
            std::optional<R> acc;
            for (int in = 0; in < layer.in_ch; ++in)
              for (int ky = 0; ky < 3; ++ky) {
                const int iy = 2 * oy + ky - 1;
                if (iy < 0 || iy >= cur.h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                  const int ix = 2 * ox + kx - 1;
                  if (ix < 0 || ix >= cur.w) continue;
                  R term = cur.at(iy, ix, in) * layer.weight(f, in, ky, kx);
                  acc = acc ? *acc + term : term;
                }
              }
            next.at(oy, ox, f) = vtanh(*acc);
          }
      out.push_back(next);
      cur = std::move(next);
    }
    return out;
  }

  int n_levels_;
  int features_;
  std::vector<Layer> layers_;
};

enum class FeatureLevels { kAll, kLastTwo };

// Mean squared feature difference, averaged over the selected levels. The
// ground-truth side is always evaluated in plain doubles (no gradient).
template <class R>
R loss_feature(const FeatureExtractor& extractor, const Image<R>& pred, const ImageD& gt,
               FeatureLevels which, Tape* tape = nullptr) {
  if (!gt.same_shape(pred.h, pred.w, pred.c))
    throw std::invalid_argument("loss_feature: shape mismatch");
  const int L = extractor.levels();
  const int first = which == FeatureLevels::kAll ? 0 : L - 2;
  if (first < 0) throw std::invalid_argument("loss_feature: extractor has too few levels");

  std::vector<Image<R>> pf;
  if constexpr (std::is_same_v<R, Var>) {
    pf = extractor.extract(pred, *tape);
  } else {
    pf = extractor.extract(pred);
  }
  const std::vector<ImageD> gf = extractor.extract(gt);

  std::optional<R> total;
  for (int l = first; l < L; ++l) {
    const std::size_t n = pf[l].v.size();
    R acc = vpow2(pf[l].v[0] - gf[l].v[0]);
    for (std::size_t i = 1; i < n; ++i) acc = acc + vpow2(pf[l].v[i] - gf[l].v[i]);
    acc = acc * (1.0 / static_cast<double>(n));
    total = total ? *total + acc : acc;
  }
  return *total * (1.0 / static_cast<double>(L - first));
}

// Global image embedding for the semantic loss.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  virtual std::vector<double> embed(const ImageD& img) const = 0;
  virtual std::vector<Var> embed(const ImageV& img, Tape& tape) const = 0;
};

// Toy semantic embedder: global-average-pooled deepest feature level pushed
// through a fixed random projection.
class PooledProjectionEmbedder final : public Embedder {
 public:
  PooledProjectionEmbedder(std::shared_ptr<const FeatureExtractor> extractor, int features,
                           int dim, std::uint64_t seed)
      : extractor_(std::move(extractor)), features_(features), dim_(dim) {
    Rng rng(mix_seed(seed, rng_stream::kEmbedder));
    projection_.resize(static_cast<std::size_t>(dim) * features);
    const double bound = 1.0 / std::sqrt(static_cast<double>(features));
    for (double& p : projection_) p = rng.uniform(-bound, bound);
  }

  int dim() const override { return dim_; }
  std::vector<double> embed(const ImageD& img) const override { return embed_impl(img, nullptr); }
  std::vector<Var> embed(const ImageV& img, Tape& tape) const override {
    return embed_impl(img, &tape);
  }

 private:
  template <class R>
  std::vector<R> embed_impl(const Image<R>& img, Tape* tape) const {
    std::vector<Image<R>> feats;
    if constexpr (std::is_same_v<R, Var>) {
      feats = extractor_->extract(img, *tape);
    } else {
      feats = extractor_->extract(img);
    }
    const Image<R>& deep = feats.back();
    if (deep.c != features_) throw std::invalid_argument("embedder: feature count mismatch");
    std::vector<R> pooled;
    pooled.reserve(features_);
    const double inv = 1.0 / (static_cast<double>(deep.h) * deep.w);
    for (int f = 0; f < features_; ++f) {
      std::optional<R> acc;
      for (int y = 0; y < deep.h; ++y)
        for (int x = 0; x < deep.w; ++x)
          acc = acc ? *acc + deep.at(y, x, f) : deep.at(y, x, f);
      pooled.push_back(*acc * inv);
    }
    std::vector<R> e;
    e.reserve(dim_);
    for (int d = 0; d < dim_; ++d) {
      std::optional<R> acc;
      for (int f = 0; f < features_; ++f) {
        R term = pooled[f] * projection_[static_cast<std::size_t>(d) * features_ + f];
        acc = acc ? *acc + term : term;
      }
      e.push_back(*acc);
    }
    return e;
  }

  std::shared_ptr<const FeatureExtractor> extractor_;
  int features_;
  int dim_;
  std::vector<double> projection_;
};

// 1 - cosine similarity between global embeddings; range [0, 2].
template <class R>
R loss_semantic(const Embedder& embedder, const Image<R>& pred, const ImageD& gt,
                Tape* tape = nullptr) {
  if (!gt.same_shape(pred.h, pred.w, pred.c))
    throw std::invalid_argument("loss_semantic: shape mismatch");
  std::vector<R> e;
  if constexpr (std::is_same_v<R, Var>) {
    e = embedder.embed(pred, *tape);
  } else {
    e = embedder.embed(pred);
  }
  const std::vector<double> g = embedder.embed(gt);

  double gnorm2 = 0;
  for (double v : g) gnorm2 += v * v;
  R dot_eg = e[0] * g[0];
  R enorm2 = vpow2(e[0]);
  for (std::size_t i = 1; i < e.size(); ++i) {
    dot_eg = dot_eg + e[i] * g[i];
    enorm2 = enorm2 + vpow2(e[i]);
  }
  if (gnorm2 < 1e-30 || value_of(enorm2) < 1e-30)
    throw std::domain_error("loss_semantic: zero-norm embedding");
  R cos = dot_eg / (vsqrt(enorm2) * std::sqrt(gnorm2));
  return 1.0 - cos;
}

// Per-view weighted loss assembly. Missing required components raise.
template <class R>
struct LossTerms {
  std::optional<R> recon, depth, vgg, clip, tv, vgg2;
};

template <class R>
R total_loss(ViewKind view, const LossTerms<R>& terms, const LossWeights& weights, int iter,
             const ScheduleConfig& cfg) {
  weights.validate();
  if (view == ViewKind::kCanonical) {
    if (!terms.recon || !terms.depth || !terms.vgg)
      throw std::invalid_argument("total_loss: canonical view needs recon, depth and vgg terms");
    R acc = *terms.recon * weights.recon;
    acc = acc + *terms.depth * weights.depth;
    acc = acc + *terms.vgg * weights.vgg;
    return acc;
  }
  if (!terms.clip || !terms.tv || !terms.vgg2)
    throw std::invalid_argument("total_loss: novel view needs clip, tv and vgg2 terms");
  const double lambda4 = clip_weight(iter, cfg, weights.clip_max);
  R acc = *terms.clip * lambda4;
  acc = acc + *terms.tv * weights.tv;
  acc = acc + *terms.vgg2 * weights.vgg2;
  return acc;
}

}  // namespace trivol
