// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "trivol/scene.hpp"

using namespace trivol;

namespace {
constexpr double kFar = 3.5;
}

TEST_CASE("sphere intersection distances", "[scene]") {
  SceneDescriptor d = sphere_scene();
  d.spheres[0].center = {0, 0, 0};
  d.spheres[0].radius = 1.0;
  bool hit;
  SECTION("unit sphere from (0,2,0) straight down the axis") {
    const double x = gt_depth_along_ray(d, {0, 2, 0}, {0, -1, 0}, kFar, hit);
    CHECK(hit);
    CHECK(x == Catch::Approx(1.0).epsilon(1e-14));
  }
  SECTION("radius 0.5 gives 1.5") {
    d.spheres[0].radius = 0.5;
    const double x = gt_depth_along_ray(d, {0, 2, 0}, {0, -1, 0}, kFar, hit);
    CHECK(hit);
    CHECK(x == Catch::Approx(1.5).epsilon(1e-14));
  }
  SECTION("miss reports far") {
    const double x = gt_depth_along_ray(d, {0, 2, 0}, {0, 1, 0}, kFar, hit);
    CHECK_FALSE(hit);
    CHECK(x == kFar);
  }
}

TEST_CASE("plane intersection matches a ray-march oracle", "[scene]") {
  SceneDescriptor d = plane_scene();  // z = -0.5
  const Vec3 o{0.2, 1.8, 0.6};
  const Vec3 dir = normalized(Vec3{-0.1, -0.85, -0.5});  // hits inside the cube
  bool hit;
  const double x = gt_depth_along_ray(d, o, dir, kFar, hit);
  REQUIRE(hit);
  // closed form: t = (o_z + 0.5) / (-d_z)
  CHECK(x == Catch::Approx((o.z + 0.5) / (-dir.z)).epsilon(1e-12));
  // iterative ray-march oracle with step 1e-4
  double t = 0;
  while (t < kFar && (o + t * dir).z > -0.5) t += 1e-4;
  CHECK(std::fabs(x - t) < 2e-4);
}

TEST_CASE("scene samples: symmetry, all-miss, scanline monotonicity", "[scene]") {
  SECTION("centered sphere depth map is radially symmetric for odd sizes") {
    SceneDescriptor d = sphere_scene();
    d.spheres[0].checker = false;
    CameraPose pose = pose_from_angles(kPi / 2, 0, 2.0, 1.0, 9, 9);
    SceneSample s = make_scene(d, pose, kFar);
    for (int r = 0; r < 9; ++r)
      for (int c = 0; c < 9; ++c) {
        const double a = s.depth[r * 9 + c];
        const double b = s.depth[(8 - r) * 9 + (8 - c)];
        CHECK(std::fabs(a - b) <= 1e-9);
      }
  }
  SECTION("all-miss scene: depth = far everywhere, empty mask") {
    SceneDescriptor d;
    d.kind = SceneKind::kSphere;
    d.spheres.clear();
    CameraPose pose = pose_from_angles(kPi / 2, 0, 2.0, 1.0, 5, 5);
    SceneSample s = make_scene(d, pose, kFar);
    for (double v : s.depth) CHECK(v == kFar);
    for (auto m : s.mask) CHECK(m == 0);
    for (double c : s.color.v) CHECK(c == 1.0);
  }
  SECTION("plane depth along a scanline matches the closed form per pixel") {
    SceneDescriptor d = plane_scene();
    CameraPose pose = pose_from_angles(kPi / 2, 0.6, 2.0, 1.0, 7, 7);
    SceneSample s = make_scene(d, pose, kFar);
    for (int c = 0; c < 7; ++c) {
      const Ray r = ray_for_pixel(pose, 3, c);
      if (!s.mask[3 * 7 + c]) continue;
      const double expect = (-0.5 - r.o.z) / r.d.z;
      CHECK(s.depth[3 * 7 + c] == Catch::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("reprojection consistency and nonzero depth variance", "[scene][property]") {
  SceneDescriptor two = two_spheres_scene();
  Rng rng(61);
  for (int k = 0; k < 5; ++k) {
    const double yaw = kPi / 2 + rng.uniform(-0.5, 0.5);
    const double pitch = rng.uniform(-0.4, 0.4);
    CameraPose pose = pose_from_angles(yaw, pitch, 2.0, 1.0, 11, 11);
    SceneSample s = make_scene(two, pose, kFar);
    int hits = 0;
    double mean = 0, var = 0;
    for (int row = 0; row < 11; ++row)
      for (int col = 0; col < 11; ++col) {
        const std::size_t i = row * 11 + col;
        mean += s.depth[i];
        if (!s.mask[i]) continue;
        ++hits;
        const Ray r = ray_for_pixel(pose, row, col);
        const Vec3 p = r.o + s.depth[i] * r.d;
        double best = 1e18;
        for (const SphereDef& sp : two.spheres)
          best = std::min(best, std::fabs(norm(p - sp.center) - sp.radius));
        CHECK(best < 1e-9);
      }
    mean /= 121.0;
    for (double v : s.depth) var += (v - mean) * (v - mean);
    CHECK(hits > 0);
    CHECK(var > 1e-6);
  }
}

TEST_CASE("scene generation is deterministic", "[scene]") {
  SceneDescriptor d = two_spheres_scene();
  CameraPose pose = pose_from_angles(1.4, 0.1, 2.0, 1.0, 8, 8);
  SceneSample a = make_scene(d, pose, kFar);
  SceneSample b = make_scene(d, pose, kFar);
  CHECK(a.color.v == b.color.v);
  CHECK(a.depth == b.depth);
  CHECK(a.mask == b.mask);
}

TEST_CASE("descriptor validation", "[scene]") {
  SceneDescriptor d = sphere_scene();
  d.spheres[0].radius = 0.5;
  d.spheres[0].center = {0.9, 0, 0};  // pokes out of the cube
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  SceneDescriptor ok = two_spheres_scene();
  CHECK_NOTHROW(ok.validate());
}
