// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Instance-level index of fused embeddings and centers with similarity-over-distance
// merging and text lookup.

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "o2v/camera.hpp"

namespace o2v {

struct InstanceEntry {
  std::uint64_t id = 0;
  Eigen::VectorXd embedding;  ///< unit length
  Vec3 center = Vec3::Zero();
  double weight = 0;
  std::uint64_t voxel_count = 1;
  friend bool operator==(const InstanceEntry& a, const InstanceEntry& b) {
    return a.id == b.id && a.embedding.size() == b.embedding.size() && a.embedding == b.embedding &&
           a.center == b.center && a.weight == b.weight && a.voxel_count == b.voxel_count;
  }
};

struct QueryHit {
  std::uint64_t id = 0;
  double cosine = 0;
  Vec3 center = Vec3::Zero();
  double weight = 0;
};

/// max(cos(e.embedding, f), 0) / max(|e.center - c|, eps_dist)
double merge_score(const InstanceEntry& entry, const Eigen::VectorXd& f, const Vec3& c, double eps_dist = 0.05);

class RetrievalMap {
 public:
  explicit RetrievalMap(double alpha = 2.0, double eps_dist = 0.05) : alpha_(alpha), eps_dist_(eps_dist) {}

  /// Merges into the best-scoring entry when its score exceeds alpha (ties go to the
  /// lowest id), otherwise creates an entry. Returns the id that received the observation.
  /// Throws InputError when k <= 0 or f is not unit length.
  std::uint64_t register_instance(const Eigen::VectorXd& f, const Vec3& c, double k, std::uint64_t voxels = 1);

  /// Entries by cosine to q, descending; ties by larger weight, then smaller id.
  [[nodiscard]] std::vector<QueryHit> query_text(const Eigen::VectorXd& q, std::size_t top_n) const;

  [[nodiscard]] const std::vector<InstanceEntry>& entries() const { return entries_; }
  [[nodiscard]] double alpha() const { return alpha_; }
  [[nodiscard]] double eps_dist() const { return eps_dist_; }
  [[nodiscard]] std::uint64_t next_id() const { return next_id_; }

  /// Rebuilds a map from serialized state.
  static RetrievalMap restore(double alpha, double eps_dist, std::vector<InstanceEntry> entries,
                              std::uint64_t next_id);
  friend bool operator==(const RetrievalMap&, const RetrievalMap&) = default;

 private:
  double alpha_;
  double eps_dist_;
  std::vector<InstanceEntry> entries_;  ///< ascending id
  std::uint64_t next_id_ = 0;
};

}  // namespace o2v
