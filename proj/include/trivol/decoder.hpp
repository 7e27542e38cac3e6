// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "trivol/rng.hpp"
#include "trivol/tape.hpp"
#include "trivol/vec3.hpp"

namespace trivol {

// Two-layer MLP mapping a sampled triplane feature plus the view direction
// to (density, rgb). Softplus hidden activation; softplus density head and
// sigmoid color head keep outputs in range without clipping.
struct DecoderParams {
  static constexpr int kHidden = 64;
  static constexpr int kOut = 4;  // density + rgb

  int in_channels = 0;       // triplane channels C; layer-1 input is C+3
  std::vector<double> w1;    // kHidden x (C+3), row-major
  std::vector<double> b1;    // kHidden
  std::vector<double> w2;    // kOut x kHidden, row-major
  std::vector<double> b2;    // kOut
  double density_bias = -1.0;  // fixed additive offset on the density logit

  int layer1_inputs() const { return in_channels + 3; }
  std::size_t param_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
};

// Layer-1 weights are uniform +-1/sqrt(fan_in) with zero bias. The output
// layer starts at zero so the initial field is constant: sigma =
// softplus(density_bias), color = 0.5, regardless of the feature input.
inline DecoderParams decoder_init(int channels, std::uint64_t seed) {
  if (channels < 1) throw std::invalid_argument("decoder_init: channels must be >= 1");
  DecoderParams p;
  p.in_channels = channels;
  const int in1 = p.layer1_inputs();
  p.w1.resize(static_cast<std::size_t>(DecoderParams::kHidden) * in1);
  p.b1.assign(DecoderParams::kHidden, 0.0);
  p.w2.assign(static_cast<std::size_t>(DecoderParams::kOut) * DecoderParams::kHidden, 0.0);
  p.b2.assign(DecoderParams::kOut, 0.0);
  Rng rng(mix_seed(seed, rng_stream::kDecoderInit));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in1));
  for (double& w : p.w1) w = rng.uniform(-bound, bound);
  return p;
}

// Flat parameter order: w1, b1, w2, b2. density_bias is a structural
// constant, not a parameter.
inline double decoder_flat_param(const DecoderParams& p, std::size_t i) {
  if (i < p.w1.size()) return p.w1[i];
  i -= p.w1.size();
  if (i < p.b1.size()) return p.b1[i];
  i -= p.b1.size();
  if (i < p.w2.size()) return p.w2[i];
  i -= p.w2.size();
  return p.b2[i];
}

inline double& decoder_flat_param(DecoderParams& p, std::size_t i) {
  if (i < p.w1.size()) return p.w1[i];
  i -= p.w1.size();
  if (i < p.b1.size()) return p.b1[i];
  i -= p.b1.size();
  if (i < p.w2.size()) return p.w2[i];
  i -= p.w2.size();
  return p.b2[i];
}

template <class R>
struct DecodeResult {
  R sigma;
  std::array<R, 3> color;
};

// Decoder weight access in the two evaluation modes.
struct PlainDecoderAccess {
  using value_type = double;
  const DecoderParams& dec;
  double weight(std::size_t flat) const { return decoder_flat_param(dec, flat); }
};

template <class Layout>
struct TapeDecoderAccess {
  using value_type = Var;
  std::vector<Var> leaves;  // one leaf per decoder parameter, created up front

  TapeDecoderAccess(const DecoderParams& dec, const Layout& layout, Tape& tape) {
    const std::size_t n = dec.param_count();
    leaves.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      leaves.push_back(tape.leaf(decoder_flat_param(dec, i),
                                 static_cast<std::int32_t>(layout.decoder_param_base() + i)));
  }
  Var weight(std::size_t flat) const { return leaves[flat]; }
};

// Per-ray precomputation: the direction is constant along a ray, so the
// bias-plus-direction part of every hidden unit is shared by all samples.
template <class Acc>
struct DecoderRayContext {
  std::array<typename Acc::value_type, DecoderParams::kHidden> hidden_base;
};

template <class Acc>
DecoderRayContext<Acc> decoder_ray_context(const DecoderParams& dp, const Acc& acc,
                                           const Vec3& dir) {
  const int C = dp.in_channels;
  const int in1 = dp.layer1_inputs();
  const std::size_t b1_off = dp.w1.size();
  DecoderRayContext<Acc> ctx;
  for (int j = 0; j < DecoderParams::kHidden; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * in1;
    auto s = acc.weight(b1_off + j) + acc.weight(row + C) * dir.x;
    s = s + acc.weight(row + C + 1) * dir.y;
    s = s + acc.weight(row + C + 2) * dir.z;
    ctx.hidden_base[j] = s;
  }
  return ctx;
}

template <class Acc, class R>
DecodeResult<R> decode_with_context(const DecoderParams& dp, const Acc& acc,
                                    const DecoderRayContext<Acc>& ctx,
                                    const std::vector<R>& feature) {
  const int C = dp.in_channels;
  if (static_cast<int>(feature.size()) != C)
    throw std::invalid_argument("decode: feature size mismatch");
  for (const R& g : feature)
    if (!std::isfinite(value_of(g))) throw std::domain_error("decode: non-finite feature");

  const int in1 = dp.layer1_inputs();
  const std::size_t w2_off = dp.w1.size() + dp.b1.size();
  const std::size_t b2_off = w2_off + dp.w2.size();

  std::array<R, DecoderParams::kHidden> hidden;
  for (int j = 0; j < DecoderParams::kHidden; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * in1;
    R s = ctx.hidden_base[j];
    for (int i = 0; i < C; ++i) s = s + acc.weight(row + i) * feature[i];
    hidden[j] = vsoftplus(s);
  }

  std::array<R, DecoderParams::kOut> out;
  for (int o = 0; o < DecoderParams::kOut; ++o) {
    const std::size_t row = w2_off + static_cast<std::size_t>(o) * DecoderParams::kHidden;
    R s = acc.weight(b2_off + o);
    for (int j = 0; j < DecoderParams::kHidden; ++j) s = s + acc.weight(row + j) * hidden[j];
    out[o] = s;
  }

  DecodeResult<R> res;
  res.sigma = vsoftplus(out[0] + dp.density_bias);
  res.color = {vsigmoid(out[1]), vsigmoid(out[2]), vsigmoid(out[3])};
  return res;
}

template <class Acc, class R>
DecodeResult<R> decode(const DecoderParams& dp, const Acc& acc, const std::vector<R>& feature,
                       const Vec3& dir) {
  return decode_with_context(dp, acc, decoder_ray_context(dp, acc, dir), feature);
}

}  // namespace trivol
