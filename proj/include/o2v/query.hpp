// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Full-frame rendering of color, depth and text relevance from a map snapshot.

#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "o2v/image_io.hpp"
#include "o2v/perception.hpp"
#include "o2v/renderer.hpp"
#include "o2v/snapshot.hpp"

namespace o2v {

struct ViewRender {
  RgbImage rgb;
  DepthImage depth;
};

/// Volume-rendered color and depth for every pixel of `intrinsics` seen from `pose`.
ViewRender render_view(const MapSnapshot& snapshot, const Pose& pose, const CameraIntrinsics& intrinsics);

struct RelevanceMap {
  int width = 0;
  int height = 0;
  Eigen::VectorXd relevance;          ///< normalized, row-major, in [0,1]
  Eigen::VectorXd raw;                ///< max(0, cos) before normalization
  std::vector<std::uint8_t> present;  ///< 1 where a language feature was rendered
  Pose pose;
  std::string query;

  /// Pixels with relevance >= tau.
  [[nodiscard]] std::vector<std::uint8_t> mask(double tau) const;
};

/// Min-max normalization over present pixels; absent pixels become 0. When every present
/// value is equal the raw values are kept.
Eigen::VectorXd normalize_relevance(const Eigen::VectorXd& raw, const std::vector<std::uint8_t>& present);

RelevanceMap render_relevance(const MapSnapshot& snapshot, const Pose& pose, const CameraIntrinsics& intrinsics,
                              const std::string& text, const Eigen::VectorXd& text_embedding);

/// Second-pass samples and termination weights of every pixel of one view. Language can
/// be read from any field at these samples, so several language states that share one
/// geometry are compared without re-rendering.
struct ViewGeometry {
  CameraIntrinsics intrinsics;
  Pose pose;
  double language_half_width = 0;
  std::vector<RaySampleBatch> samples;
  std::vector<RenderOutput> outputs;  ///< depth and weights only
};

ViewGeometry render_geometry(const MapSnapshot& snapshot, const Pose& pose, const CameraIntrinsics& intrinsics);

/// Per-pixel rendered language of `field` at the samples of `view`.
std::vector<std::optional<Eigen::VectorXd>> render_language_view(const ViewGeometry& view,
                                                                 const VoxelField<float>& field);

/// Relevance of a text embedding against per-pixel language features.
RelevanceMap relevance_from_features(const ViewGeometry& view,
                                     const std::vector<std::optional<Eigen::VectorXd>>& features,
                                     const std::string& text, const Eigen::VectorXd& text_embedding);
RelevanceMap render_relevance(const MapSnapshot& snapshot, const Pose& pose, const CameraIntrinsics& intrinsics,
                              const std::string& text, const PerceptionProvider& provider);

}  // namespace o2v
