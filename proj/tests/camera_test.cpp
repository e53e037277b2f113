// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "o2v/camera.hpp"

namespace o2v {
namespace {

CameraIntrinsics intr() { return {100, 100, 31.5, 23.5, 64, 48}; }

RGBDFrame flat_frame(const Pose& pose, float depth) {
  RGBDFrame f;
  f.intrinsics = intr();
  f.pose = pose;
  f.depth = DepthBuffer::Constant(static_cast<Eigen::Index>(f.intrinsics.pixel_count()), depth);
  f.rgb = RgbBuffer::Constant(static_cast<Eigen::Index>(f.intrinsics.pixel_count()), 3, 0.5f);
  return f;
}

TEST(PixelToRay, PrincipalPointLooksForward) {
  const Ray r = pixel_to_ray(intr(), Pose::identity(), 31.5, 23.5);
  EXPECT_NEAR((r.direction - Vec3::UnitZ()).norm(), 0, 1e-12);
  EXPECT_DOUBLE_EQ(r.axial, 1.0);
}

TEST(PixelToRay, OneFocalLengthRight) {
  CameraIntrinsics wide = intr();
  wide.width = 200;
  const Ray s = pixel_to_ray(wide, Pose::identity(), 131.5, 23.5);
  EXPECT_NEAR((s.direction - Vec3(1, 0, 1).normalized()).norm(), 0, 1e-12);
}

TEST(PixelToRay, TranslationMovesOriginOnly) {
  const Vec3 t(1, -2, 0.5);
  const Ray a = pixel_to_ray(intr(), Pose::identity(), 10, 7);
  const Ray b = pixel_to_ray(intr(), Pose::translation_only(t), 10, 7);
  EXPECT_EQ(b.origin, t);
  EXPECT_NEAR((a.direction - b.direction).norm(), 0, 1e-15);
}

TEST(PixelToRay, OutOfImageThrows) {
  EXPECT_THROW((void)pixel_to_ray(intr(), Pose::identity(), -1, 0), InputError);
  EXPECT_THROW((void)pixel_to_ray(intr(), Pose::identity(), 64, 0), InputError);
}

TEST(Backproject, ZeroDepthIsNone) {
  RGBDFrame f = flat_frame(Pose::identity(), 0.0f);
  EXPECT_FALSE(backproject(f, 3, 3).has_value());
}

TEST(Backproject, OnAxisPoint) {
  CameraIntrinsics k = intr();
  k.cx = 32;
  k.cy = 24;
  RGBDFrame f = flat_frame(Pose::identity(), 2.0f);
  f.intrinsics = k;
  EXPECT_NEAR((*backproject(f, 32, 24) - Vec3(0, 0, 2)).norm(), 0, 1e-12);
  f.pose = Pose::translation_only({1, 0, 0});
  EXPECT_NEAR((*backproject(f, 32, 24) - Vec3(1, 0, 2)).norm(), 0, 1e-12);
}

TEST(Backproject, ReprojectionRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0.3, 5.0);
  const Pose pose = Pose::look_at({0.3, -1.2, 1.1}, {0.5, 0.5, 0.2});
  RGBDFrame f = flat_frame(pose, 1.0f);
  for (auto& v : f.depth) v = static_cast<float>(d(rng));
  for (int v = 0; v < f.intrinsics.height; ++v) {
    for (int u = 0; u < f.intrinsics.width; ++u) {
      const auto p = backproject(f, u, v);
      ASSERT_TRUE(p.has_value());
      const auto uv = project(f.intrinsics, pose, *p);
      ASSERT_TRUE(uv.has_value());
      EXPECT_LT(std::abs((*uv)[0] - u), 0.5);
      EXPECT_LT(std::abs((*uv)[1] - v), 0.5);
      EXPECT_NEAR(pose.apply_inverse(*p).z(), f.depth[static_cast<Eigen::Index>(f.index(u, v))], 1e-5);
    }
  }
}

TEST(Pose, ComposeWithInverseIsIdentity) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 100; ++i) {
    const Pose p = Pose::look_at({u(rng), u(rng), u(rng)}, {u(rng) + 5, u(rng), u(rng)});
    const Pose id = p * p.inverse();
    EXPECT_NEAR((id.rotation() - Mat3::Identity()).norm(), 0, 1e-6);
    EXPECT_NEAR(id.translation().norm(), 0, 1e-6);
  }
}

TEST(Pose, RejectsNonRotation) {
  Mat3 r = Mat3::Identity();
  r(0, 0) = -1;
  EXPECT_THROW(Pose(r, Vec3::Zero()).validate(), InputError);
  r = Mat3::Identity() * 1.1;
  EXPECT_FALSE(Pose(r, Vec3::Zero()).is_valid());
}

TEST(Frame, ValidateRejectsBadDepth) {
  RGBDFrame f = flat_frame(Pose::identity(), 1.0f);
  EXPECT_NO_THROW(f.validate(10.0));
  f.depth[0] = -1.0f;
  EXPECT_THROW(f.validate(10.0), InputError);
  f.depth[0] = 20.0f;
  EXPECT_THROW(f.validate(10.0), InputError);
  f.depth[0] = std::nanf("");
  EXPECT_THROW(f.validate(10.0), InputError);
}

TEST(Bounds, RayIntersection) {
  const SceneBounds b{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  Ray r;
  r.origin = Vec3(-3, 0, 0);
  r.direction = Vec3::UnitX();
  const auto hit = b.intersect(r);
  ASSERT_TRUE(hit.has_value());
  EXPECT_NEAR(hit->first, 2, 1e-12);
  EXPECT_NEAR(hit->second, 4, 1e-12);
  r.direction = -Vec3::UnitX();
  EXPECT_FALSE(b.intersect(r).has_value());
}

}  // namespace
}  // namespace o2v
