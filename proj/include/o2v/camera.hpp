// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Camera, pose, ray and frame primitives.

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace o2v {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Thrown when a caller passes arguments that violate an operation's preconditions.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Pinhole intrinsics. Pixel (u, v) with integer coordinates addresses the pixel center.
struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;
  [[nodiscard]] std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  [[nodiscard]] bool contains(double u, double v) const {
    return u >= 0 && v >= 0 && u < width && v < height;
  }
};

/// Rigid transform world <- camera. Camera axes: x right, y down, z forward.
class Pose {
 public:
  Pose() = default;
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return {}; }
  static Pose translation_only(const Vec3& t) { return {Mat3::Identity(), t}; }
  /// Camera at `eye` looking at `target`; `up` is the world up direction.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

  [[nodiscard]] const Mat3& rotation() const { return rotation_; }
  [[nodiscard]] const Vec3& translation() const { return translation_; }
  [[nodiscard]] Vec3 forward() const { return rotation_.col(2); }

  [[nodiscard]] Vec3 apply(const Vec3& p_camera) const { return rotation_ * p_camera + translation_; }
  [[nodiscard]] Vec3 apply_inverse(const Vec3& p_world) const {
    return rotation_.transpose() * (p_world - translation_);
  }
  [[nodiscard]] Pose inverse() const;
  [[nodiscard]] Pose operator*(const Pose& rhs) const;

  /// Checks orthonormality and determinant +1 within `tol`.
  [[nodiscard]] bool is_valid(double tol = 1e-6) const;
  void validate(double tol = 1e-6) const;

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// Unit-direction ray. `axial` is the cosine between direction and the camera optical
/// axis, so a plane depth z corresponds to ray length z / axial.
struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double axial = 1.0;

  [[nodiscard]] Vec3 at_depth(double plane_depth) const {
    return origin + direction * (plane_depth / axial);
  }
};

struct SceneBounds {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();

  void validate() const;
  [[nodiscard]] bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  [[nodiscard]] Vec3 extent() const { return max - min; }
  [[nodiscard]] SceneBounds padded(double margin) const {
    return {(min.array() - margin).matrix(), (max.array() + margin).matrix()};
  }
  /// Maps a point to [-1, 1]^3.
  [[nodiscard]] Vec3 normalize(const Vec3& p) const {
    return (2.0 * (p - min).array() / extent().array() - 1.0).matrix();
  }
  /// Ray-parameter interval [t_enter, t_exit] (ray length units) or nullopt.
  [[nodiscard]] std::optional<std::pair<double, double>> intersect(const Ray& ray) const;
};

/// Row-major H*W x 3 color buffer, values in [0, 1]. Pixel (u, v) lives at row v * W + u.
using RgbBuffer = Eigen::Matrix<float, Eigen::Dynamic, 3, Eigen::RowMajor>;
/// Row-major H*W plane depth in meters; 0 marks invalid.
using DepthBuffer = Eigen::VectorXf;

struct RGBDFrame {
  std::uint64_t frame_id = 0;
  RgbBuffer rgb;
  DepthBuffer depth;
  Pose pose;
  CameraIntrinsics intrinsics;

  void validate(double max_range) const;
  [[nodiscard]] std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(intrinsics.width) +
           static_cast<std::size_t>(u);
  }
};

/// World-frame ray through pixel (u, v) for a camera at `pose`.
Ray pixel_to_ray(const CameraIntrinsics& intrinsics, const Pose& pose, double u, double v);
inline Ray pixel_to_ray(const RGBDFrame& frame, double u, double v) {
  return pixel_to_ray(frame.intrinsics, frame.pose, u, v);
}

/// World point for pixel (u, v) using the stored plane depth; nullopt on the 0 sentinel.
std::optional<Vec3> backproject(const RGBDFrame& frame, int u, int v);

/// Pixel coordinates of a world point, or nullopt when it lies behind the camera.
std::optional<Eigen::Vector2d> project(const CameraIntrinsics& intrinsics, const Pose& pose,
                                       const Vec3& world);

}  // namespace o2v
