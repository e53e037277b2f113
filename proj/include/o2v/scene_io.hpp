// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// On-disk scene directories: scene.json, frames/ (PPM color, O2VD depth, pose text),
// perception.o2vp and an optional text.o2vt sidecar.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "o2v/camera.hpp"
#include "o2v/perception.hpp"
#include "o2v/synth_world.hpp"

namespace o2v {

/// One evaluation query: a label, the frames to score and how many objects carry it.
struct QuerySpec {
  std::string text;
  std::vector<std::uint64_t> frames;
  int expected_instances = 0;
};

struct SynthExportOptions {
  std::uint64_t seed = 0;
  int objects = 4;
  int frames = 60;
  bool boundary = false;        ///< two-box boundary room instead of generate_scene
  int corrupt_frames = 0;       ///< extra frames appended with corrupted perception
  float corrupt_confidence = 0.1f;
  int eval_stride = 3;          ///< every n-th stream frame is an evaluation frame
  int min_visible_pixels = 50;  ///< a label is scored in a frame only above this GT area
};

class SceneDirectory {
 public:
  /// Opens and checks a directory; throws FormatError on missing or inconsistent parts.
  static SceneDirectory open(const std::filesystem::path& root);

  [[nodiscard]] const std::filesystem::path& root() const { return root_; }
  [[nodiscard]] const CameraIntrinsics& intrinsics() const { return intrinsics_; }
  [[nodiscard]] std::size_t frame_count() const { return frame_ids_.size(); }
  [[nodiscard]] const std::vector<std::uint64_t>& frame_ids() const { return frame_ids_; }
  [[nodiscard]] const std::optional<SynthScene>& scene() const { return scene_; }
  [[nodiscard]] const SceneBounds& bounds() const { return bounds_; }
  [[nodiscard]] double max_range() const { return max_range_; }

  /// Frame by stream position.
  [[nodiscard]] RGBDFrame load_frame(std::size_t index) const;
  [[nodiscard]] Pose load_pose(std::size_t index) const;

  /// Archive-backed provider (text sidecar attached when present).
  [[nodiscard]] std::shared_ptr<const PerceptionProvider> provider() const;
  [[nodiscard]] std::vector<QuerySpec> queries() const;

 private:
  std::filesystem::path root_;
  CameraIntrinsics intrinsics_;
  SceneBounds bounds_;
  double max_range_ = 10.0;
  std::vector<std::uint64_t> frame_ids_;
  std::optional<SynthScene> scene_;
};

/// Renders a synthetic room and writes it as a scene directory, including the stub
/// perception archive, a text sidecar for every label and an evaluation query file.
void export_synthetic_scene(const std::filesystem::path& root, const SynthExportOptions& options);

/// Stream poses and frame ids of a synthetic export without touching the disk.
struct SynthStream {
  SynthScene scene;
  CameraIntrinsics intrinsics;
  std::vector<Pose> poses;
  std::vector<std::uint64_t> frame_ids;
  std::set<std::uint64_t> corrupted;
};
SynthStream synth_stream(const SynthExportOptions& options);

/// Queries for every object label over the evaluation frames where it is visible.
std::vector<QuerySpec> synth_queries(const SynthStream& stream, const SynthExportOptions& options);

std::vector<QuerySpec> read_queries(const std::filesystem::path& path);
void write_queries(const std::filesystem::path& path, const std::vector<QuerySpec>& queries);

void write_pose(const std::filesystem::path& path, const Pose& pose);
Pose read_pose(const std::filesystem::path& path);

}  // namespace o2v
