// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/synth_world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

namespace o2v {
namespace {

Mat3 yaw_matrix(double yaw) { return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(); }

const std::array<const char*, 8> kLabelPool = {"chair", "table", "lamp", "sofa", "plant", "cabinet", "monitor", "bin"};

const std::array<Eigen::Vector3d, 8> kObjectPalette = {
    Eigen::Vector3d(0.75, 0.30, 0.25), Eigen::Vector3d(0.25, 0.55, 0.75), Eigen::Vector3d(0.30, 0.70, 0.35),
    Eigen::Vector3d(0.80, 0.70, 0.25), Eigen::Vector3d(0.60, 0.35, 0.70), Eigen::Vector3d(0.25, 0.65, 0.65),
    Eigen::Vector3d(0.75, 0.50, 0.30), Eigen::Vector3d(0.45, 0.45, 0.75)};

std::array<Eigen::Vector3d, kSurfaceCount> default_surface_colors() {
  return {Eigen::Vector3d(0.55, 0.48, 0.40), Eigen::Vector3d(0.85, 0.85, 0.80), Eigen::Vector3d(0.70, 0.66, 0.58),
          Eigen::Vector3d(0.62, 0.70, 0.66), Eigen::Vector3d(0.66, 0.62, 0.72), Eigen::Vector3d(0.72, 0.72, 0.62)};
}

SceneBounds default_room() { return {Vec3(-2.0, -2.0, 0.0), Vec3(2.0, 2.0, 2.5)}; }

}  // namespace

double SynthObject::footprint_radius() const {
  if (kind == PrimitiveKind::kSphere) return radius();
  return 0.5 * std::hypot(size.x(), size.y());
}

std::optional<double> SynthObject::intersect(const Ray& ray) const {
  if (kind == PrimitiveKind::kSphere) {
    const Vec3 oc = ray.origin - center;
    const double b = oc.dot(ray.direction);
    const double c = oc.squaredNorm() - radius() * radius();
    const double disc = b * b - c;
    if (disc < 0) return std::nullopt;
    const double s = std::sqrt(disc);
    const double t0 = -b - s;
    if (t0 > 1e-9) return t0;
    const double t1 = -b + s;
    if (t1 > 1e-9) return t1;
    return std::nullopt;
  }
  const Mat3 rt = yaw_matrix(yaw).transpose();
  const Vec3 o = rt * (ray.origin - center);
  const Vec3 d = rt * ray.direction;
  const Vec3 half = 0.5 * size;
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (std::abs(o[a]) > half[a]) return std::nullopt;
      continue;
    }
    double ta = (-half[a] - o[a]) / d[a];
    double tb = (half[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1 || t1 <= 1e-9) return std::nullopt;
  return t0 > 1e-9 ? t0 : t1;
}

std::string surface_label(Surface s) {
  switch (s) {
    case Surface::kFloor: return "floor";
    case Surface::kCeiling: return "ceiling";
    default: return "wall";
  }
}

std::vector<std::string> SynthScene::object_labels() const {
  std::set<std::string> labels;
  for (const auto& o : objects) labels.insert(o.label);
  return {labels.begin(), labels.end()};
}

SynthScene generate_scene(std::uint64_t seed, int object_count) {
  if (object_count < 1) throw InputError("generate_scene: object_count must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

  SynthScene scene;
  scene.seed = seed;
  scene.room = default_room();
  scene.surface_colors = default_surface_colors();

  std::vector<std::size_t> label_order(kLabelPool.size());
  for (std::size_t i = 0; i < label_order.size(); ++i) label_order[i] = i;
  std::shuffle(label_order.begin(), label_order.end(), rng);

  const double area = 1.1;
  constexpr double kMinGap = 0.3;
  for (int i = 0; i < object_count; ++i) {
    SynthObject obj;
    const std::size_t label_slot = (object_count >= 4 && i == 1) ? 0 : static_cast<std::size_t>(i);
    obj.label = kLabelPool[label_order[label_slot % label_order.size()]];
    obj.color = kObjectPalette[(static_cast<std::size_t>(seed) + static_cast<std::size_t>(i)) % kObjectPalette.size()];
    obj.kind = unit(rng) < 0.7 ? PrimitiveKind::kBox : PrimitiveKind::kSphere;
    if (obj.kind == PrimitiveKind::kBox) {
      obj.size = Vec3(uniform(0.35, 0.7), uniform(0.35, 0.7), uniform(0.35, 0.9));
      obj.yaw = uniform(0.0, std::numbers::pi / 2);
    } else {
      obj.size = Vec3::Constant(uniform(0.2, 0.35));
    }
    bool placed = false;
    for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
      const Vec3 c(uniform(-area, area), uniform(-area, area),
                   obj.kind == PrimitiveKind::kBox ? 0.5 * obj.size.z() : obj.radius());
      placed = std::all_of(scene.objects.begin(), scene.objects.end(), [&](const SynthObject& other) {
        return (c - other.center).head<2>().norm() - obj.footprint_radius() - other.footprint_radius() >= kMinGap;
      });
      if (placed) obj.center = c;
    }
    if (!placed) throw GenerationError("generate_scene: could not place object " + std::to_string(i));
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

SynthScene boundary_scene(std::uint64_t seed) {
  SynthScene scene;
  scene.seed = seed;
  scene.room = default_room();
  scene.surface_colors = default_surface_colors();
  // The shared face sits at x = 0.08, the middle of a 0.16 m cell.
  SynthObject left{"crate", PrimitiveKind::kBox, Vec3(-0.22, 0.0, 0.3), 0.0, Vec3(0.6, 0.6, 0.6),
                   Eigen::Vector3d(0.75, 0.30, 0.25)};
  SynthObject right{"cabinet", PrimitiveKind::kBox, Vec3(0.38, 0.0, 0.3), 0.0, Vec3(0.6, 0.6, 0.6),
                    Eigen::Vector3d(0.25, 0.55, 0.75)};
  scene.objects = {left, right};
  return scene;
}

GtHit cast_ray(const SynthScene& scene, const Ray& ray) {
  GtHit hit;
  hit.t = std::numeric_limits<double>::infinity();
  // Room interior: exit through the nearest wall.
  for (int a = 0; a < 3; ++a) {
    const double d = ray.direction[a];
    if (std::abs(d) < 1e-15) continue;
    const double bound = d > 0 ? scene.room.max[a] : scene.room.min[a];
    const double t = (bound - ray.origin[a]) / d;
    if (t > 0 && t < hit.t) {
      hit.t = t;
      static constexpr std::array<std::array<Surface, 2>, 3> kFaces = {
          {{Surface::kWallXMin, Surface::kWallXMax}, {Surface::kWallYMin, Surface::kWallYMax},
           {Surface::kFloor, Surface::kCeiling}}};
      hit.surface = static_cast<std::int8_t>(kFaces[static_cast<std::size_t>(a)][d > 0 ? 1 : 0]);
    }
  }
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto t = scene.objects[i].intersect(ray);
    if (t && *t < hit.t) {
      hit.t = *t;
      hit.instance = static_cast<std::int32_t>(i);
      hit.surface = -1;
    }
  }
  return hit;
}

GtView render_gt(const SynthScene& scene, const Pose& pose, const CameraIntrinsics& intrinsics) {
  intrinsics.validate();
  const auto n = static_cast<Eigen::Index>(intrinsics.pixel_count());
  GtView view;
  view.rgb.resize(n, 3);
  view.depth.resize(n);
  view.instance.assign(static_cast<std::size_t>(n), -1);
  view.surface.assign(static_cast<std::size_t>(n), -1);
  for (int v = 0; v < intrinsics.height; ++v) {
    for (int u = 0; u < intrinsics.width; ++u) {
      const Ray ray = pixel_to_ray(intrinsics, pose, u, v);
      const GtHit hit = cast_ray(scene, ray);
      const auto idx = static_cast<Eigen::Index>(v) * intrinsics.width + u;
      if (!std::isfinite(hit.t)) {
        view.depth[idx] = 0.0f;
        view.rgb.row(idx).setZero();
        continue;
      }
      view.depth[idx] = static_cast<float>(hit.t * ray.axial);
      const Eigen::Vector3d color = hit.instance >= 0 ? scene.objects[static_cast<std::size_t>(hit.instance)].color
                                                      : scene.surface_colors[static_cast<std::size_t>(hit.surface)];
      view.rgb.row(idx) = color.transpose().cast<float>();
      view.instance[static_cast<std::size_t>(idx)] = hit.instance;
      view.surface[static_cast<std::size_t>(idx)] = hit.surface;
    }
  }
  return view;
}

RGBDFrame make_frame(const SynthScene& scene, const Pose& pose, const CameraIntrinsics& intrinsics,
                     std::uint64_t frame_id) {
  GtView view = render_gt(scene, pose, intrinsics);
  RGBDFrame frame;
  frame.frame_id = frame_id;
  frame.rgb = std::move(view.rgb);
  frame.depth = std::move(view.depth);
  frame.pose = pose;
  frame.intrinsics = intrinsics;
  return frame;
}

std::size_t unoccluded_pixel_count(const SynthObject& object, const Pose& pose, const CameraIntrinsics& intrinsics,
                                   int scale) {
  CameraIntrinsics wide = intrinsics;
  wide.width = intrinsics.width * scale;
  wide.height = intrinsics.height * scale;
  wide.cx = intrinsics.cx + intrinsics.width * (scale - 1) / 2.0;
  wide.cy = intrinsics.cy + intrinsics.height * (scale - 1) / 2.0;
  std::size_t count = 0;
  for (int v = 0; v < wide.height; ++v) {
    for (int u = 0; u < wide.width; ++u) {
      if (object.intersect(pixel_to_ray(wide, pose, u, v))) ++count;
    }
  }
  return count;
}

CameraIntrinsics default_intrinsics() { return {120.0, 120.0, 79.5, 59.5, 160, 120}; }

std::vector<Pose> orbit_trajectory(const SynthScene& scene, int n_frames, double phase) {
  if (n_frames < 1) throw InputError("orbit_trajectory: n_frames must be >= 1");
  const Vec3 center = 0.5 * (scene.room.min + scene.room.max);
  const double radius = std::min(scene.room.extent().x(), scene.room.extent().y()) / 2.0 - 0.4;
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(n_frames));
  for (int k = 0; k < n_frames; ++k) {
    const double theta = 2.0 * std::numbers::pi * (k + phase) / n_frames;
    const Vec3 eye(center.x() + radius * std::cos(theta), center.y() + radius * std::sin(theta),
                   scene.room.min.z() + 1.3 + 0.15 * std::sin(2.0 * theta));
    // Sway the look-at point sideways so objects drift in and out of the image border.
    const Vec3 side(-std::sin(theta), std::cos(theta), 0.0);
    const Vec3 target = Vec3(center.x(), center.y(), scene.room.min.z() + 0.4) + 0.45 * std::sin(3.0 * theta) * side;
    poses.push_back(Pose::look_at(eye, target));
  }
  return poses;
}

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) throw InputError("mask_iou: mask size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double evaluate_iou(const std::vector<std::vector<std::uint8_t>>& predicted,
                    const std::vector<std::vector<std::uint8_t>>& ground_truth) {
  if (predicted.size() != ground_truth.size() || predicted.empty()) {
    throw InputError("evaluate_iou: need matching, nonempty frame lists");
  }
  double sum = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += mask_iou(predicted[i], ground_truth[i]);
  return sum / static_cast<double>(predicted.size());
}

std::vector<std::uint8_t> label_mask(const SynthScene& scene, const GtView& view, const std::string& label) {
  std::vector<std::uint8_t> mask(view.instance.size(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const auto id = view.instance[i];
    mask[i] = (id >= 0 && scene.objects[static_cast<std::size_t>(id)].label == label) ? 1 : 0;
  }
  return mask;
}

}  // namespace o2v
