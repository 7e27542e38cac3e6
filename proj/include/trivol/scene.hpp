// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "trivol/camera.hpp"
#include "trivol/losses.hpp"
#include "trivol/vec3.hpp"

namespace trivol {

// Analytic primitives with closed-form ray intersections. They stand in for
// real RGBD data: the analytic hit distance plays the role the estimated
// depth map plays at scale, and doubles as the evaluation oracle.
struct SphereDef {
  Vec3 center{0, 0, 0};
  double radius = 0.8;
  Vec3 albedo{0.9, 0.55, 0.25};
  bool checker = false;
  double checker_scale = 4.0;   // cells per unit length
  Vec3 albedo2{0.15, 0.3, 0.75};
};

struct PlaneDef {
  Vec3 normal{0, 0, 1};
  double offset = -0.5;  // n . p = offset
  Vec3 albedo{0.4, 0.65, 0.35};
  bool checker = true;
  double checker_scale = 2.0;
  Vec3 albedo2{0.85, 0.85, 0.8};
};

enum class SceneKind { kSphere, kPlane, kTwoSpheres };

struct SceneDescriptor {
  SceneKind kind = SceneKind::kSphere;
  std::vector<SphereDef> spheres{SphereDef{}};
  PlaneDef plane;
  Vec3 light_dir{0.3, 0.9, 0.35};  // normalized on use
  Vec3 background{1, 1, 1};

  void validate() const {
    auto inside_cube = [](const Vec3& p) {
      return std::fabs(p.x) <= 1 && std::fabs(p.y) <= 1 && std::fabs(p.z) <= 1;
    };
    if (kind != SceneKind::kPlane) {
      // An empty sphere list is the all-miss scene: depth = far everywhere.
      for (const SphereDef& s : spheres) {
        if (!(s.radius > 0)) throw std::invalid_argument("scene: sphere radius must be > 0");
        const Vec3 ext{s.radius, s.radius, s.radius};
        if (!inside_cube(s.center + ext) || !inside_cube(s.center - ext))
          throw std::invalid_argument("scene: sphere leaves the [-1,1]^3 cube");
      }
    }
    if (kind == SceneKind::kPlane && std::fabs(plane.offset) > 1.0)
      throw std::invalid_argument("scene: plane outside the cube");
    if (norm(light_dir) < 1e-9) throw std::invalid_argument("scene: zero light direction");
  }
};

namespace detail {

// Nearest positive sphere intersection, or miss.
inline bool ray_sphere(const Vec3& o, const Vec3& d, const SphereDef& s, double& t_hit) {
  const Vec3 oc = o - s.center;
  const double b = dot(oc, d);
  const double c = dot(oc, oc) - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0) return false;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t <= 1e-9) t = -b + sq;
  if (t <= 1e-9) return false;
  t_hit = t;
  return true;
}

// Plane intersection clipped to the scene cube.
inline bool ray_plane(const Vec3& o, const Vec3& d, const PlaneDef& p, double& t_hit) {
  const Vec3 n = normalized(p.normal);
  const double denom = dot(n, d);
  if (std::fabs(denom) < 1e-12) return false;
  const double t = (p.offset - dot(n, o)) / denom;
  if (t <= 1e-9) return false;
  const Vec3 hit = o + t * d;
  if (std::fabs(hit.x) > 1 || std::fabs(hit.y) > 1 || std::fabs(hit.z) > 1) return false;
  t_hit = t;
  return true;
}

inline bool checker_parity(const Vec3& p, double scale) {
  const long cx = static_cast<long>(std::floor(p.x * scale));
  const long cy = static_cast<long>(std::floor(p.y * scale));
  const long cz = static_cast<long>(std::floor(p.z * scale));
  return ((cx + cy + cz) & 1) != 0;
}

}  // namespace detail

// Closed-form nearest positive intersection along a unit ray. Misses report
// the far distance with hit = false.
inline double gt_depth_along_ray(const SceneDescriptor& desc, const Vec3& o, const Vec3& d,
                                 double far, bool& hit) {
  double best = far;
  hit = false;
  if (desc.kind == SceneKind::kSphere || desc.kind == SceneKind::kTwoSpheres) {
    for (const SphereDef& s : desc.spheres) {
      double t;
      if (detail::ray_sphere(o, d, s, t) && t < best) {
        best = t;
        hit = true;
      }
    }
  } else {
    double t;
    if (detail::ray_plane(o, d, desc.plane, t) && t < best) {
      best = t;
      hit = true;
    }
  }
  if (!hit) return far;
  return best;
}

// Lambertian shading with a fixed light; view-independent per surface point
// so semantic losses are meaningful across poses.
inline Vec3 shade_at(const SceneDescriptor& desc, const Vec3& o, const Vec3& d, double t) {
  const Vec3 p = o + t * d;
  const Vec3 l = normalized(desc.light_dir);
  Vec3 albedo{0, 0, 0};
  Vec3 n{0, 0, 1};
  if (desc.kind == SceneKind::kSphere || desc.kind == SceneKind::kTwoSpheres) {
    double best = 1e18;
    for (const SphereDef& s : desc.spheres) {
      const double dist = std::fabs(norm(p - s.center) - s.radius);
      if (dist < best) {
        best = dist;
        n = normalized(p - s.center);
        albedo = s.albedo;
        if (s.checker && detail::checker_parity(p, s.checker_scale)) albedo = s.albedo2;
      }
    }
  } else {
    n = normalized(desc.plane.normal);
    if (dot(n, d) > 0) n = -n;
    albedo = desc.plane.albedo;
    if (desc.plane.checker && detail::checker_parity(p, desc.plane.checker_scale))
      albedo = desc.plane.albedo2;
  }
  const double lambert = std::max(0.0, dot(n, l));
  return albedo * lambert;
}

// Synthetic RGBD ground truth for one camera pose.
struct SceneSample {
  CameraPose pose;
  ImageD color;                     // h x w x 3
  std::vector<double> depth;        // ray distance; far on misses
  std::vector<std::uint8_t> mask;   // 1 on hits
};

inline SceneSample make_scene(const SceneDescriptor& desc, const CameraPose& pose, double far) {
  desc.validate();
  SceneSample out;
  out.pose = pose;
  out.color = ImageD(pose.height, pose.width, 3);
  const std::size_t px = static_cast<std::size_t>(pose.height) * pose.width;
  out.depth.resize(px);
  out.mask.resize(px);
  for (int row = 0; row < pose.height; ++row)
    for (int col = 0; col < pose.width; ++col) {
      const std::size_t i = static_cast<std::size_t>(row) * pose.width + col;
      const Ray r = ray_for_pixel(pose, row, col);
      bool hit;
      const double t = gt_depth_along_ray(desc, r.o, r.d, far, hit);
      out.depth[i] = t;
      out.mask[i] = hit ? 1 : 0;
      const Vec3 c = hit ? shade_at(desc, r.o, r.d, t) : desc.background;
      out.color.at(row, col, 0) = c.x;
      out.color.at(row, col, 1) = c.y;
      out.color.at(row, col, 2) = c.z;
    }
  return out;
}

// Stock descriptors used by the fitting harness and tests.
inline SceneDescriptor sphere_scene() {
  SceneDescriptor d;
  d.kind = SceneKind::kSphere;
  d.spheres = {SphereDef{}};
  return d;
}

inline SceneDescriptor two_spheres_scene() {
  SceneDescriptor d;
  d.kind = SceneKind::kTwoSpheres;
  SphereDef a;
  a.center = {-0.15, 0.3, 0.05};
  a.radius = 0.5;
  a.albedo = {0.85, 0.3, 0.2};
  SphereDef b;
  b.center = {0.4, -0.4, -0.1};
  b.radius = 0.45;
  b.albedo = {0.2, 0.45, 0.85};
  d.spheres = {a, b};
  return d;
}

inline SceneDescriptor plane_scene() {
  SceneDescriptor d;
  d.kind = SceneKind::kPlane;
  return d;
}

}  // namespace trivol
