// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "trivol/rng.hpp"
#include "trivol/vec3.hpp"

namespace trivol {

constexpr double kPi = 3.14159265358979323846;

// Orbit camera: position on a sphere of the given radius, looking at the
// origin, up = +z projected orthogonal to the view axis. Canonical pose is
// yaw = pi/2, pitch = 0.
struct CameraPose {
  double yaw = kPi / 2;
  double pitch = 0.0;
  double radius = 2.0;
  double fov = 1.0;  // full field of view along each image axis, radians
  int height = 0;
  int width = 0;

  Vec3 position() const {
    return radius * Vec3{std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch),
                         std::sin(pitch)};
  }
  Vec3 forward() const { return normalized(-position()); }
  Vec3 up() const {
    const Vec3 f = forward();
    const Vec3 z{0, 0, 1};
    return normalized(z - dot(z, f) * f);
  }
  Vec3 right() const { return normalized(cross(forward(), up())); }
};

inline CameraPose pose_from_angles(double yaw, double pitch, double radius, double fov,
                                   int height, int width) {
  if (!(fov > 0.0) || !(fov < kPi)) throw std::invalid_argument("pose: fov out of (0, pi)");
  if (!(radius > 0.0)) throw std::invalid_argument("pose: radius must be positive");
  if (!(std::fabs(pitch) < kPi / 2)) throw std::invalid_argument("pose: degenerate pitch");
  if (height < 1 || width < 1) throw std::invalid_argument("pose: bad image size");
  CameraPose p;
  p.yaw = yaw;
  p.pitch = pitch;
  p.radius = radius;
  p.fov = fov;
  p.height = height;
  p.width = width;
  return p;
}

// Inverse of CameraPose::position (away from the pitch poles).
inline void angles_from_position(const Vec3& pos, double& yaw, double& pitch, double& radius) {
  radius = norm(pos);
  pitch = std::asin(pos.z / radius);
  yaw = std::atan2(pos.y, pos.x);
}

struct Ray {
  Vec3 o, d;
};

// Pinhole ray through the center of pixel (row, col); row 0 is the top
// image row. For odd sizes the center pixel ray is exactly the view axis.
inline Ray ray_for_pixel(const CameraPose& pose, int row, int col) {
  const double u = (2.0 * col + 1.0 - pose.width) / pose.width;
  const double v = (pose.height - (2.0 * row + 1.0)) / pose.height;
  const double s = std::tan(pose.fov / 2);
  const Vec3 dir = pose.forward() + (u * s) * pose.right() + (v * s) * pose.up();
  return {pose.position(), normalized(dir)};
}

inline std::vector<Ray> generate_rays(const CameraPose& pose) {
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(pose.height) * pose.width);
  const Vec3 o = pose.position();
  const Vec3 f = pose.forward(), r = pose.right(), up = pose.up();
  const double s = std::tan(pose.fov / 2);
  for (int row = 0; row < pose.height; ++row) {
    const double v = (pose.height - (2.0 * row + 1.0)) / pose.height;
    for (int col = 0; col < pose.width; ++col) {
      const double u = (2.0 * col + 1.0 - pose.width) / pose.width;
      rays.push_back({o, normalized(f + (u * s) * r + (v * s) * up)});
    }
  }
  return rays;
}

// Novel poses perturb the canonical view: yaw ~ N(pi/2, 0.3),
// pitch ~ N(0, 0.15), sigma read as standard deviation.
inline void sample_novel_pose(Rng& rng, double& yaw, double& pitch) {
  yaw = rng.normal(kPi / 2, 0.3);
  pitch = rng.normal(0.0, 0.15);
}

enum class DepthMode { kMidpoint, kStratified };

struct DepthSamples {
  std::vector<double> t;      // strictly increasing in (near, far)
  std::vector<double> delta;  // delta[i] = t[i+1]-t[i], last = far - t[n-1]
};

inline DepthSamples sample_depths(double near, double far, int n, DepthMode mode, Rng* rng) {
  if (!(near >= 0.0) || !(far > near)) throw std::invalid_argument("sample_depths: bad range");
  if (n < 2) throw std::invalid_argument("sample_depths: need at least 2 samples");
  if (mode == DepthMode::kStratified && rng == nullptr)
    throw std::invalid_argument("sample_depths: stratified mode needs an rng");
  DepthSamples s;
  s.t.resize(n);
  s.delta.resize(n);
  const double step = (far - near) / n;
  for (int i = 0; i < n; ++i) {
    const double jitter = mode == DepthMode::kMidpoint ? 0.5 : rng->uniform();
    s.t[i] = near + (i + jitter) * step;
  }
  for (int i = 0; i + 1 < n; ++i) s.delta[i] = s.t[i + 1] - s.t[i];
  s.delta[n - 1] = far - s.t[n - 1];
  return s;
}

}  // namespace trivol
