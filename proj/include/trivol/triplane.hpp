// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "trivol/rng.hpp"
#include "trivol/tape.hpp"
#include "trivol/vec3.hpp"

namespace trivol {

// One axis-aligned feature plane spanning normalized coordinates [-1,1]^2.
// Storage is row-major with the channel as the fastest index.
struct FeaturePlane {
  int resolution = 0;
  int channels = 0;
  std::vector<double> data;

  FeaturePlane() = default;
  FeaturePlane(int res, int ch) : resolution(res), channels(ch) {
    if (res < 1 || ch < 1) throw std::invalid_argument("feature plane: bad shape");
    data.assign(static_cast<std::size_t>(res) * res * ch, 0.0);
  }

  std::size_t flat(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * resolution + col) * channels + ch;
  }
  double& at(int row, int col, int ch) { return data[flat(row, col, ch)]; }
  double at(int row, int col, int ch) const { return data[flat(row, col, ch)]; }
};

// 2x2 box average; mean-preserving by construction.
inline FeaturePlane downsample_plane(const FeaturePlane& in) {
  if (in.resolution % 2 != 0)
    throw std::invalid_argument("downsample_plane: resolution must be even, got " +
                                std::to_string(in.resolution));
  FeaturePlane out(in.resolution / 2, in.channels);
  for (int r = 0; r < out.resolution; ++r)
    for (int c = 0; c < out.resolution; ++c)
      for (int ch = 0; ch < in.channels; ++ch)
        out.at(r, c, ch) = 0.25 * (in.at(2 * r, 2 * c, ch) + in.at(2 * r, 2 * c + 1, ch) +
                                   in.at(2 * r + 1, 2 * c, ch) + in.at(2 * r + 1, 2 * c + 1, ch));
  return out;
}

enum PlaneId { kPlaneXY = 0, kPlaneXZ = 1, kPlaneYZ = 2 };

// Three orthogonal planes replicated at three resolutions. Level 0 is the
// only parameter store; coarser levels are derived views and must be
// recomputed (rederive_levels) after every update of level 0.
struct TriplanePyramid {
  static constexpr int kLevels = 3;
  int channels = 0;
  std::array<std::array<FeaturePlane, 3>, kLevels> levels;

  int resolution(int level) const { return levels[level][0].resolution; }
};

inline void rederive_levels(TriplanePyramid& pyr) {
  for (int l = 1; l < TriplanePyramid::kLevels; ++l)
    for (int p = 0; p < 3; ++p) pyr.levels[l][p] = downsample_plane(pyr.levels[l - 1][p]);
}

inline TriplanePyramid pyramid_build(int base_resolution, int channels, std::uint64_t seed) {
  if (base_resolution % 4 != 0)
    throw std::invalid_argument("pyramid_build: base resolution must be divisible by 4, got " +
                                std::to_string(base_resolution));
  if (channels < 1) throw std::invalid_argument("pyramid_build: channels must be >= 1");
  TriplanePyramid pyr;
  pyr.channels = channels;
  Rng rng(mix_seed(seed, rng_stream::kTriplaneInit));
  for (int p = 0; p < 3; ++p) {
    FeaturePlane plane(base_resolution, channels);
    for (double& v : plane.data) v = rng.uniform(-1e-2, 1e-2);
    pyr.levels[0][p] = std::move(plane);
  }
  rederive_levels(pyr);
  return pyr;
}

namespace detail {

struct BilinearTap {
  std::size_t i00, i10, i01, i11;  // flat indices of channel 0 at the 4 corners
  double w00, w10, w01, w11;
};

// Maps a coordinate pair in [-1,1]^2 onto the node-aligned grid (corner
// nodes sit exactly on the domain boundary). Resolution-1 planes degenerate
// to a single node.
inline BilinearTap bilinear_tap(const FeaturePlane& plane, double a, double b) {
  const int res = plane.resolution;
  BilinearTap tap{};
  if (res == 1) {
    tap.i00 = tap.i10 = tap.i01 = tap.i11 = 0;
    tap.w00 = 1.0;
    return tap;
  }
  const double ga = (a + 1.0) * 0.5 * (res - 1);
  const double gb = (b + 1.0) * 0.5 * (res - 1);
  int ia = static_cast<int>(std::floor(ga));
  int ib = static_cast<int>(std::floor(gb));
  if (ia > res - 2) ia = res - 2;
  if (ib > res - 2) ib = res - 2;
  if (ia < 0) ia = 0;
  if (ib < 0) ib = 0;
  const double fa = ga - ia;
  const double fb = gb - ib;
  tap.i00 = plane.flat(ib, ia, 0);
  tap.i10 = plane.flat(ib, ia + 1, 0);
  tap.i01 = plane.flat(ib + 1, ia, 0);
  tap.i11 = plane.flat(ib + 1, ia + 1, 0);
  tap.w00 = (1 - fa) * (1 - fb);
  tap.w10 = fa * (1 - fb);
  tap.w01 = (1 - fa) * fb;
  tap.w11 = fa * fb;
  return tap;
}

inline void plane_coords(PlaneId plane, const Vec3& p, double& a, double& b) {
  switch (plane) {
    case kPlaneXY: a = p.x; b = p.y; break;
    case kPlaneXZ: a = p.x; b = p.z; break;
    default: a = p.y; b = p.z; break;
  }
}

}  // namespace detail

// Reads triplane texels as plain doubles.
struct PlainTriplaneAccess {
  using value_type = double;
  const TriplanePyramid& pyr;
  double tex(int level, int plane, std::size_t flat) const {
    return pyr.levels[level][plane].data[flat];
  }
};

// Reads triplane texels as tape leaves bound to extended parameter slots.
// plane_param_base(level, plane) must return the slot of that plane's first
// entry; duplicate reads create duplicate leaves, which accumulate.
template <class Layout>
struct TapeTriplaneAccess {
  using value_type = Var;
  const TriplanePyramid& pyr;
  const Layout& layout;
  Tape& tape;
  Var tex(int level, int plane, std::size_t flat) const {
    const double v = pyr.levels[level][plane].data[flat];
    return tape.leaf(v, static_cast<std::int32_t>(layout.plane_param_base(level, plane) + flat));
  }
};

// Multi-resolution point sample: bilinear per plane, mean across the three
// planes, sum across levels. Out-of-range coordinates clamp (border padding).
template <class Acc>
void sample_point(const TriplanePyramid& pyr, const Acc& acc, Vec3 p,
                  std::vector<typename Acc::value_type>& out) {
  using R = typename Acc::value_type;
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
    throw std::domain_error("sample_point: non-finite point");
  p.x = vclamp(p.x, -1.0, 1.0);
  p.y = vclamp(p.y, -1.0, 1.0);
  p.z = vclamp(p.z, -1.0, 1.0);

  const int C = pyr.channels;
  out.clear();
  out.reserve(C);
  for (int l = 0; l < TriplanePyramid::kLevels; ++l) {
    std::array<detail::BilinearTap, 3> taps;
    for (int pl = 0; pl < 3; ++pl) {
      double a, b;
      detail::plane_coords(static_cast<PlaneId>(pl), p, a, b);
      taps[pl] = detail::bilinear_tap(pyr.levels[l][pl], a, b);
    }
    for (int ch = 0; ch < C; ++ch) {
      bool first_plane = true;
      R level_sum{};
      for (int pl = 0; pl < 3; ++pl) {
        const detail::BilinearTap& tp = taps[pl];
        R s = acc.tex(l, pl, tp.i00 + ch) * tp.w00;
        s = s + acc.tex(l, pl, tp.i10 + ch) * tp.w10;
        s = s + acc.tex(l, pl, tp.i01 + ch) * tp.w01;
        s = s + acc.tex(l, pl, tp.i11 + ch) * tp.w11;
        level_sum = first_plane ? s : level_sum + s;
        first_plane = false;
      }
      level_sum = level_sum * (1.0 / 3.0);
      if (l == 0) {
        out.push_back(level_sum);
      } else {
        out[ch] = out[ch] + level_sum;
      }
    }
  }
}

}  // namespace trivol
