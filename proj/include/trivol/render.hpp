// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "trivol/camera.hpp"
#include "trivol/model.hpp"
#include "trivol/parallel.hpp"
#include "trivol/tape.hpp"

namespace trivol {

// Clamped Gaussian of sample-to-surface distance. Multiplies the density
// and color adjoints during backprop; never enters the forward pass.
struct KernelParams {
  double s1 = 1.25;
  double s2 = 0.03;  // units: distance^2
  double c_min = 0.05;
  double c_max = 1.0;

  void validate() const {
    if (!(s1 > 0.0) || !(s2 > 0.0) || !(c_min > 0.0) || !(c_min <= c_max))
      throw std::invalid_argument("kernel params: need s1, s2 > 0 and 0 < c_min <= c_max");
  }
};

inline double kernel_eval(double surface_depth, double sample_depth, const KernelParams& k) {
  const double d = surface_depth - sample_depth;
  return vclamp(k.s1 * std::exp(-(d * d) / k.s2), k.c_min, k.c_max);
}

struct RenderOptions {
  double sigma_scale = 1.0;
  bool kernel_enabled = false;
  KernelParams kernel;
  Vec3 background{1.0, 1.0, 1.0};
  double depth_eps = 1e-10;

  void validate() const {
    if (!(sigma_scale > 0.0)) throw std::invalid_argument("render: sigma_scale must be > 0");
    if (!(depth_eps > 0.0)) throw std::invalid_argument("render: depth_eps must be > 0");
    kernel.validate();
  }
};

template <class R>
struct CompositeResult {
  std::array<R, 3> color;
  std::vector<R> weights;
  std::vector<R> transmittance;  // T[0] = 1, non-increasing
  R opacity;
};

// Standard alpha compositing over a constant background:
//   T_i = exp(-sum_{j<i} sigma_j delta_j), w_i = T_i (1 - exp(-sigma_i delta_i)),
//   C = sum w_i c_i + (1 - sum w_i) * background.
template <class R>
CompositeResult<R> composite(const std::vector<R>& sigma,
                             const std::vector<std::array<R, 3>>& color,
                             const std::vector<double>& delta, const Vec3& background) {
  const std::size_t n = sigma.size();
  if (n == 0 || color.size() != n || delta.size() != n)
    throw std::invalid_argument("composite: need equal-length non-empty inputs");

  CompositeResult<R> out;
  out.weights.reserve(n);
  out.transmittance.reserve(n);

  R trans = sigma[0] * 0.0 + 1.0;  // exact 1, living on the same tape when R = Var
  bool first = true;
  R wsum{};
  std::array<R, 3> acc{};
  for (std::size_t i = 0; i < n; ++i) {
    out.transmittance.push_back(trans);
    const R att = vexp(-(sigma[i] * delta[i]));  // exp(-sigma_i delta_i)
    const R alpha = 1.0 - att;
    const R w = first ? alpha : trans * alpha;   // T_0 = 1 exactly
    out.weights.push_back(w);
    if (first) {
      wsum = w;
      for (int ch = 0; ch < 3; ++ch) acc[ch] = w * color[i][ch];
    } else {
      wsum = wsum + w;
      for (int ch = 0; ch < 3; ++ch) acc[ch] = acc[ch] + w * color[i][ch];
    }
    trans = trans * att;
    first = false;
  }
  out.opacity = wsum;
  const R residual = 1.0 - wsum;
  for (int ch = 0; ch < 3; ++ch) out.color[ch] = acc[ch] + residual * background[ch];
  return out;
}

// Weight-averaged sample distance; eps guards the division for empty rays.
template <class R>
R accumulated_depth(const std::vector<R>& weights, const std::vector<double>& t, double eps) {
  if (weights.size() != t.size() || weights.empty())
    throw std::invalid_argument("accumulated_depth: need equal-length non-empty inputs");
  R num = weights[0] * t[0];
  R den = weights[0] + eps;
  for (std::size_t i = 1; i < weights.size(); ++i) {
    num = num + weights[i] * t[i];
    den = den + weights[i];
  }
  return num / den;
}

// A ray with its depth samples and, for canonical-view rays, the pseudo-GT
// surface distance used by the regularization kernel.
struct RaySamples {
  Vec3 o, d;
  std::vector<double> t, delta;
  std::optional<double> surface_depth;
};

template <class R>
struct RayResult {
  std::array<R, 3> color;
  R depth;
  R opacity;
  std::vector<R> weights;
  // Hook sites: density / color values entering the compositor, one per sample.
  std::vector<R> sigma_nodes;
  std::vector<std::array<R, 3>> color_nodes;
};

// Renders one ray. Acc bundles the triplane and decoder parameter access for
// one evaluation mode; the math is identical in both, so a taped forward is
// bit-identical to a plain one. Kernel hooks touch only the backward pass.
template <class TriAcc, class DecAcc>
RayResult<typename TriAcc::value_type> render_ray(const SceneModel& model, const TriAcc& tri,
                                                  const DecAcc& dec, const RaySamples& ray,
                                                  const RenderOptions& opts) {
  using R = typename TriAcc::value_type;
  opts.validate();
  if (ray.t.empty() || ray.t.size() != ray.delta.size())
    throw std::invalid_argument("render_ray: bad depth samples");
  if (opts.kernel_enabled && !ray.surface_depth)
    throw std::invalid_argument("render_ray: kernel enabled but ray has no surface depth");
  if (std::fabs(norm(ray.d) - 1.0) > 1e-9)
    throw std::invalid_argument("render_ray: direction must be unit length");

  const std::size_t n = ray.t.size();
  std::vector<R> sigma;
  std::vector<std::array<R, 3>> color;
  sigma.reserve(n);
  color.reserve(n);
  std::vector<R> feature;
  const DecoderRayContext<DecAcc> ray_ctx = decoder_ray_context(model.decoder, dec, ray.d);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = ray.o + ray.t[i] * ray.d;
    sample_point(model.pyramid, tri, p, feature);
    DecodeResult<R> out = decode_with_context(model.decoder, dec, ray_ctx, feature);
    R s = out.sigma;
    if (opts.sigma_scale != 1.0) s = s * opts.sigma_scale;
    if (opts.kernel_enabled) {
      const double k = kernel_eval(*ray.surface_depth, ray.t[i], opts.kernel);
      if constexpr (std::is_same_v<R, Var>) {
        s.tape->set_grad_scale(s, k);
        for (int ch = 0; ch < 3; ++ch) s.tape->set_grad_scale(out.color[ch], k);
      }
    }
    sigma.push_back(s);
    color.push_back(out.color);
  }

  CompositeResult<R> comp = composite(sigma, color, ray.delta, opts.background);
  RayResult<R> res;
  res.color = comp.color;
  res.opacity = comp.opacity;
  res.depth = accumulated_depth(comp.weights, ray.t, opts.depth_eps);
  res.weights = std::move(comp.weights);
  res.sigma_nodes = std::move(sigma);
  res.color_nodes = std::move(color);
  return res;
}

// Convenience wrapper for plain-double rendering of one ray.
inline RayResult<double> render_ray_plain(const SceneModel& model, const RaySamples& ray,
                                          const RenderOptions& opts) {
  PlainTriplaneAccess tri{model.pyramid};
  PlainDecoderAccess dec{model.decoder};
  return render_ray(model, tri, dec, ray, opts);
}

struct SamplingConfig {
  double near = 0.5;
  double far = 3.5;
  int samples_per_ray = 32;
};

struct ImageRender {
  int height = 0, width = 0;
  std::vector<double> color;    // h*w*3, row-major rgb
  std::vector<double> depth;    // raw accumulated depth (eq. with eps guard)
  std::vector<double> opacity;  // sum of weights per ray
};

// Deterministic midpoint-sampled full-frame render used for evaluation and
// file output. The kernel flag is forced off: it has no forward effect and
// evaluation rays carry no pseudo-GT depth.
inline ImageRender render_image(const SceneModel& model, const CameraPose& pose,
                                const SamplingConfig& sampling, RenderOptions opts,
                                int threads = 1) {
  opts.kernel_enabled = false;
  opts.validate();
  ImageRender img;
  img.height = pose.height;
  img.width = pose.width;
  const std::size_t px = static_cast<std::size_t>(pose.height) * pose.width;
  img.color.resize(px * 3);
  img.depth.resize(px);
  img.opacity.resize(px);

  const DepthSamples ds =
      sample_depths(sampling.near, sampling.far, sampling.samples_per_ray, DepthMode::kMidpoint,
                    nullptr);
  parallel_for(px, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int row = static_cast<int>(i) / pose.width;
      const int col = static_cast<int>(i) % pose.width;
      const Ray r = ray_for_pixel(pose, row, col);
      RaySamples rs{r.o, r.d, ds.t, ds.delta, std::nullopt};
      RayResult<double> out = render_ray_plain(model, rs, opts);
      for (int ch = 0; ch < 3; ++ch) img.color[i * 3 + ch] = out.color[ch];
      img.depth[i] = out.depth;
      img.opacity[i] = out.opacity;
    }
  });
  return img;
}

// Depth map with misses composited to the far plane, matching the oracle's
// miss convention; used for metrics and depth file output.
inline std::vector<double> depth_with_background(const ImageRender& img, double far) {
  std::vector<double> out(img.depth.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = img.opacity[i] * img.depth[i] + (1.0 - img.opacity[i]) * far;
  return out;
}

}  // namespace trivol
