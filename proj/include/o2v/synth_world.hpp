// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic box/sphere rooms with exact ray casting, used as ground truth.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "o2v/camera.hpp"

namespace o2v {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PrimitiveKind { kBox, kSphere };

struct SynthObject {
  std::string label;
  PrimitiveKind kind = PrimitiveKind::kBox;
  Vec3 center = Vec3::Zero();
  double yaw = 0;                  ///< rotation about world z (boxes)
  Vec3 size = Vec3::Ones();        ///< full box extents; spheres use size.x() as radius
  Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);

  [[nodiscard]] double radius() const { return size.x(); }
  /// Radius of the footprint's bounding circle in the xy plane.
  [[nodiscard]] double footprint_radius() const;
  /// Ray length of the first hit, if any.
  [[nodiscard]] std::optional<double> intersect(const Ray& ray) const;
};

/// Structural room surfaces in fixed order.
enum class Surface : std::int8_t { kFloor = 0, kCeiling, kWallXMin, kWallXMax, kWallYMin, kWallYMax };
inline constexpr int kSurfaceCount = 6;
std::string surface_label(Surface s);

struct SynthScene {
  SceneBounds room;
  std::vector<SynthObject> objects;
  std::array<Eigen::Vector3d, kSurfaceCount> surface_colors;
  std::uint64_t seed = 0;

  /// Room padded so samples behind walls stay inside the mapped volume.
  [[nodiscard]] SceneBounds mapping_bounds(double pad = 0.5) const { return room.padded(pad); }
  [[nodiscard]] std::vector<std::string> object_labels() const;  ///< unique, sorted
};

/// Objects resting on the floor with pairwise footprint gaps >= 0.3 m. With four or more
/// objects at least two share a label.
SynthScene generate_scene(std::uint64_t seed, int object_count);

/// Room with two boxes of different labels pressed together, for boundary tests.
SynthScene boundary_scene(std::uint64_t seed = 0);

struct GtView {
  RgbBuffer rgb;
  DepthBuffer depth;              ///< plane depth
  std::vector<std::int32_t> instance;  ///< object index or -1
  std::vector<std::int8_t> surface;    ///< Surface value or -1
};

struct GtHit {
  double t = 0;  ///< ray length
  std::int32_t instance = -1;
  std::int8_t surface = -1;
};

GtHit cast_ray(const SynthScene& scene, const Ray& ray);
GtView render_gt(const SynthScene& scene, const Pose& pose, const CameraIntrinsics& intrinsics);

/// Builds a posed frame from the ground-truth renderer.
RGBDFrame make_frame(const SynthScene& scene, const Pose& pose, const CameraIntrinsics& intrinsics,
                     std::uint64_t frame_id);

/// Pixels an object would cover with nothing in front of it, on a virtual image
/// `scale` times wider and taller than `intrinsics` with the same focal length.
std::size_t unoccluded_pixel_count(const SynthObject& object, const Pose& pose, const CameraIntrinsics& intrinsics,
                                   int scale = 3);

CameraIntrinsics default_intrinsics();

/// n poses on a circle around the room center, looking inward and slightly down.
/// `phase` in [0,1) shifts all poses by that fraction of one step (held-out views).
std::vector<Pose> orbit_trajectory(const SynthScene& scene, int n_frames, double phase = 0.0);

/// Intersection over union of two masks; 1 when both are empty.
double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

/// Mean per-frame IoU between predicted masks and ground-truth masks.
double evaluate_iou(const std::vector<std::vector<std::uint8_t>>& predicted,
                    const std::vector<std::vector<std::uint8_t>>& ground_truth);

/// Pixels whose object carries `label`.
std::vector<std::uint8_t> label_mask(const SynthScene& scene, const GtView& view, const std::string& label);

}  // namespace o2v
