// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Projection of mask embeddings into voxels, multi-view voting and conflict-driven
// voxel splitting.

#pragma once

#include <Eigen/Core>
#include <array>
#include <span>
#include <vector>

#include "o2v/camera.hpp"
#include "o2v/config.hpp"
#include "o2v/perception.hpp"
#include "o2v/voxel_field.hpp"

namespace o2v {

struct FusionSettings {
  bool voting = true;  ///< false: last write wins (F := f, K := k)
  bool split = true;
  double tau_split = 0.85;
  double tau_same = 0.95;
  int q_max = 8;
  std::array<double, kScaleRanks> scale_weights = {1.0, 0.6, 0.3};
};

FusionSettings fusion_settings(const Config& config);

/// Folds one observation into a language cell:
///   F <- (K F + k f) / (K + k),  K <- K + k.
/// The queue merges the record whose embedding has cosine >= tau_same with f, otherwise
/// appends; beyond q_max the record with the smallest weight * confidence is evicted.
/// Throws InputError when k <= 0 or f is not unit length.
void integrate_observation(LanguageCell& cell, const Eigen::VectorXd& f, double k, double confidence,
                           const FusionSettings& settings = {});

/// True iff some staged feature has cosine < tau_split with f.
bool detect_conflict(std::span<const Eigen::VectorXd> staged, const Eigen::VectorXd& f, double tau_split);

/// Index of the queue record with the largest weight, or -1 for an empty queue.
int dominant_record(const LanguageCell& cell);

struct MaskSummary {
  std::size_t mask = 0;
  Vec3 centroid = Vec3::Zero();  ///< mean of the mask's back-projected in-bounds points
  std::size_t points = 0;
  std::size_t voxels = 0;  ///< distinct cells hit before any split
};

struct IntegrationReport {
  std::size_t voxels_touched = 0;
  std::size_t splits = 0;
  std::size_t observations = 0;  ///< integrate_observation calls
  std::size_t pixels = 0;        ///< mask pixels that landed in the field
  std::vector<MaskSummary> masks;
};

/// Back-projects every valid-depth mask pixel, groups pixels by (finest cell, mask) and
/// integrates each group once with k = pixels * confidence * scale_weight. A base cell
/// hit by same-rank masks whose embeddings conflict is split first and its pixels are
/// routed to the children.
template <typename Scalar>
IntegrationReport integrate_frame(VoxelField<Scalar>& field, const RGBDFrame& frame,
                                  const FramePerception& perception, const FusionSettings& settings = {});

}  // namespace o2v
