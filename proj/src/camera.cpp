// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/camera.hpp"

#include <cmath>
#include <limits>

namespace o2v {

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw InputError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InputError("intrinsics: image size must be positive");
  if (!(cx > 0 && cx < width) || !(cy > 0 && cy < height)) {
    throw InputError("intrinsics: principal point outside the image");
  }
}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {}

Pose Pose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX());
  x.normalize();
  // Camera y points down.
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return {r, eye};
}

Pose Pose::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

Pose Pose::operator*(const Pose& rhs) const {
  return {rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_};
}

bool Pose::is_valid(double tol) const {
  if (!rotation_.allFinite() || !translation_.allFinite()) return false;
  const double ortho = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation_.determinant() - 1.0) <= tol;
}

void Pose::validate(double tol) const {
  if (!is_valid(tol)) throw InputError("pose: rotation is not a proper orthonormal matrix");
}

void SceneBounds::validate() const {
  if (!(min.array() < max.array()).all()) throw InputError("bounds: min must be < max componentwise");
}

std::optional<std::pair<double, double>> SceneBounds::intersect(const Ray& ray) const {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double d = ray.direction[a];
    const double o = ray.origin[a];
    if (std::abs(d) < 1e-15) {
      if (o < min[a] || o > max[a]) return std::nullopt;
      continue;
    }
    double ta = (min[a] - o) / d;
    double tb = (max[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

void RGBDFrame::validate(double max_range) const {
  intrinsics.validate();
  pose.validate();
  const auto n = static_cast<Eigen::Index>(intrinsics.pixel_count());
  if (rgb.rows() != n || depth.size() != n) throw InputError("frame: buffer size does not match intrinsics");
  if (!depth.allFinite() || (depth.size() > 0 && (depth.minCoeff() < 0.0f || depth.maxCoeff() > max_range))) {
    throw InputError("frame: depth outside [0, max_range]");
  }
  if (!rgb.allFinite()) throw InputError("frame: non-finite color");
}

Ray pixel_to_ray(const CameraIntrinsics& intrinsics, const Pose& pose, double u, double v) {
  if (!intrinsics.contains(u, v)) throw InputError("pixel_to_ray: pixel out of bounds");
  const Vec3 cam((u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0);
  const double n = cam.norm();
  Ray ray;
  ray.origin = pose.translation();
  ray.direction = pose.rotation() * (cam / n);
  ray.direction.normalize();
  ray.axial = 1.0 / n;
  return ray;
}

std::optional<Vec3> backproject(const RGBDFrame& frame, int u, int v) {
  if (!frame.intrinsics.contains(u, v)) throw InputError("backproject: pixel out of bounds");
  const double d = frame.depth[static_cast<Eigen::Index>(frame.index(u, v))];
  if (d == 0.0) return std::nullopt;
  const auto& k = frame.intrinsics;
  const Vec3 cam((u - k.cx) / k.fx * d, (v - k.cy) / k.fy * d, d);
  return frame.pose.apply(cam);
}

std::optional<Eigen::Vector2d> project(const CameraIntrinsics& intrinsics, const Pose& pose,
                                       const Vec3& world) {
  const Vec3 cam = pose.apply_inverse(world);
  if (cam.z() <= 0) return std::nullopt;
  return Eigen::Vector2d(intrinsics.fx * cam.x() / cam.z() + intrinsics.cx,
                         intrinsics.fy * cam.y() / cam.z() + intrinsics.cy);
}

}  // namespace o2v
