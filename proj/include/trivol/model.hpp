// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "trivol/decoder.hpp"
#include "trivol/triplane.hpp"

namespace trivol {

// Addressing scheme for the extended parameter space
//   [G1 planes | G2 planes | G3 planes | decoder]
// Gradients are accumulated over the whole space; G2/G3 slots exist only so
// per-ray tapes can treat derived texels as leaves. fold_level_grads routes
// their adjoints back to G1 through the transpose of the box downsample,
// after which only the learnable ranges (G1 + decoder) are meaningful.
struct ParamLayout {
  int base_resolution = 0;
  int channels = 0;
  std::array<std::size_t, TriplanePyramid::kLevels> level_offset{};
  std::array<int, TriplanePyramid::kLevels> level_resolution{};
  std::size_t decoder_offset = 0;
  std::size_t decoder_count = 0;
  std::size_t total = 0;

  ParamLayout() = default;
  ParamLayout(int base_res, int ch, std::size_t decoder_params)
      : base_resolution(base_res), channels(ch) {
    std::size_t off = 0;
    int res = base_res;
    for (int l = 0; l < TriplanePyramid::kLevels; ++l) {
      level_offset[l] = off;
      level_resolution[l] = res;
      off += plane_size(l) * 3;
      res /= 2;
    }
    decoder_offset = off;
    decoder_count = decoder_params;
    total = off + decoder_params;
  }

  std::size_t plane_size(int level) const {
    return static_cast<std::size_t>(level_resolution[level]) * level_resolution[level] * channels;
  }
  std::size_t plane_param_base(int level, int plane) const {
    return level_offset[level] + static_cast<std::size_t>(plane) * plane_size(level);
  }
  std::size_t decoder_param_base() const { return decoder_offset; }
  std::size_t g1_count() const { return level_offset[1]; }
  std::size_t learnable_count() const { return g1_count() + decoder_count; }
};

// Routes adjoints of derived texels down the pyramid: each coarse texel
// contributed 1/4 of each of its four source texels, so its adjoint adds
// 0.25-weighted into them.
inline void fold_level_grads(const ParamLayout& lay, std::span<double> grads) {
  for (int l = TriplanePyramid::kLevels - 1; l >= 1; --l) {
    const int coarse_res = lay.level_resolution[l];
    const int fine_res = lay.level_resolution[l - 1];
    const int C = lay.channels;
    for (int plane = 0; plane < 3; ++plane) {
      const std::size_t coarse_base = lay.plane_param_base(l, plane);
      const std::size_t fine_base = lay.plane_param_base(l - 1, plane);
      for (int r = 0; r < coarse_res; ++r) {
        for (int c = 0; c < coarse_res; ++c) {
          for (int ch = 0; ch < C; ++ch) {
            const double g =
                0.25 * grads[coarse_base +
                             (static_cast<std::size_t>(r) * coarse_res + c) * C + ch];
            if (g == 0.0) continue;
            const std::size_t f00 =
                fine_base + (static_cast<std::size_t>(2 * r) * fine_res + 2 * c) * C + ch;
            const std::size_t f01 = f00 + static_cast<std::size_t>(C);
            const std::size_t f10 = f00 + static_cast<std::size_t>(fine_res) * C;
            const std::size_t f11 = f10 + static_cast<std::size_t>(C);
            grads[f00] += g;
            grads[f01] += g;
            grads[f10] += g;
            grads[f11] += g;
          }
        }
      }
    }
  }
}

// The optimizable scene: triplane pyramid plus decoder.
struct SceneModel {
  TriplanePyramid pyramid;
  DecoderParams decoder;

  ParamLayout layout() const {
    return ParamLayout(pyramid.resolution(0), pyramid.channels, decoder.param_count());
  }
};

inline SceneModel make_model(int base_resolution, int channels, std::uint64_t seed) {
  SceneModel m;
  m.pyramid = pyramid_build(base_resolution, channels, seed);
  m.decoder = decoder_init(channels, seed);
  return m;
}

// Visits every learnable parameter in layout order (G1 planes, decoder).
// f(double& value, std::size_t extended_index).
template <class F>
void for_each_learnable(SceneModel& m, const ParamLayout& lay, F&& f) {
  for (int plane = 0; plane < 3; ++plane) {
    const std::size_t base = lay.plane_param_base(0, plane);
    std::vector<double>& data = m.pyramid.levels[0][plane].data;
    for (std::size_t i = 0; i < data.size(); ++i) f(data[i], base + i);
  }
  for (std::size_t i = 0; i < lay.decoder_count; ++i)
    f(decoder_flat_param(m.decoder, i), lay.decoder_offset + i);
}

template <class F>
void for_each_learnable(const SceneModel& m, const ParamLayout& lay, F&& f) {
  for (int plane = 0; plane < 3; ++plane) {
    const std::size_t base = lay.plane_param_base(0, plane);
    const std::vector<double>& data = m.pyramid.levels[0][plane].data;
    for (std::size_t i = 0; i < data.size(); ++i) f(data[i], base + i);
  }
  for (std::size_t i = 0; i < lay.decoder_count; ++i)
    f(decoder_flat_param(m.decoder, i), lay.decoder_offset + i);
}

inline std::vector<double> learnable_values(const SceneModel& m, const ParamLayout& lay) {
  std::vector<double> out;
  out.reserve(lay.learnable_count());
  for_each_learnable(m, lay, [&](double v, std::size_t) { out.push_back(v); });
  return out;
}

inline void load_learnable_values(SceneModel& m, const ParamLayout& lay,
                                  std::span<const double> values) {
  if (values.size() != lay.learnable_count())
    throw std::invalid_argument("load_learnable_values: size mismatch");
  std::size_t k = 0;
  for_each_learnable(m, lay, [&](double& v, std::size_t) { v = values[k++]; });
  rederive_levels(m.pyramid);
}

}  // namespace trivol
