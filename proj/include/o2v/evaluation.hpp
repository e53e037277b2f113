// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Open-vocabulary segmentation scoring of a map against a synthetic scene.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "o2v/scene_io.hpp"
#include "o2v/service.hpp"
#include "o2v/snapshot.hpp"

namespace o2v {

struct EvalOptions {
  double tau = 0.5;  ///< threshold on normalized relevance
  /// When set, only pixels whose ground-truth surface point satisfies this are scored.
  std::function<bool(const Vec3&)> region;
};

struct QueryScore {
  std::string text;
  double mean_iou = 0;
  std::vector<std::uint64_t> frames;
  std::vector<double> iou;  ///< per frame, same order as `frames`
};

struct EvalReport {
  double mean_iou = 0;  ///< mean over queries of the per-query frame mean
  std::vector<QueryScore> queries;
};

/// Renders relevance for every (query, frame) pair from `pose_of(frame_id)` and compares
/// the thresholded mask with the ground-truth label mask. Throws InputError on empty input.
EvalReport evaluate_map(const MapSnapshot& snapshot, const SynthScene& scene, const std::vector<QuerySpec>& queries,
                        const TextEmbedder& embed, const std::function<Pose(std::uint64_t)>& pose_of,
                        const EvalOptions& options = {});

/// Scores several language fields against the geometry of `snapshot`. Each frame is rendered
/// once and the language of every field is read at the same samples. Reports follow the
/// order of `language`.
std::vector<EvalReport> evaluate_language_variants(const MapSnapshot& snapshot,
                                                   std::span<const VoxelField<float>* const> language,
                                                   const SynthScene& scene, const std::vector<QuerySpec>& queries,
                                                   const TextEmbedder& embed,
                                                   const std::function<Pose(std::uint64_t)>& pose_of,
                                                   const EvalOptions& options = {});

}  // namespace o2v
