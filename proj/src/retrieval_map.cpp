// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/retrieval_map.hpp"

#include <algorithm>
#include <cmath>

namespace o2v {

double merge_score(const InstanceEntry& entry, const Eigen::VectorXd& f, const Vec3& c, double eps_dist) {
  const double cosine = std::max(entry.embedding.dot(f), 0.0);
  return cosine / std::max((entry.center - c).norm(), eps_dist);
}

std::uint64_t RetrievalMap::register_instance(const Eigen::VectorXd& f, const Vec3& c, double k,
                                              std::uint64_t voxels) {
  if (!(k > 0) || !std::isfinite(k)) throw InputError("register_instance: k must be positive");
  if (std::abs(f.norm() - 1.0) > 1e-6) throw InputError("register_instance: embedding must be unit length");
  if (!c.allFinite()) throw InputError("register_instance: non-finite center");

  InstanceEntry* best = nullptr;
  double best_score = 0;
  for (auto& e : entries_) {
    if (e.embedding.size() != f.size()) throw InputError("register_instance: embedding dim mismatch");
    const double s = merge_score(e, f, c, eps_dist_);
    if (s > alpha_ && (best == nullptr || s > best_score)) {
      best = &e;
      best_score = s;
    }
  }
  if (best == nullptr) {
    entries_.push_back(InstanceEntry{next_id_, f, c, k, std::max<std::uint64_t>(voxels, 1)});
    return next_id_++;
  }
  const double w = best->weight + k;
  const Eigen::VectorXd mixed = best->weight * best->embedding + k * f;
  const double n = mixed.norm();
  if (n > 0) best->embedding = mixed / n;
  best->center = (best->weight * best->center + k * c) / w;
  best->weight = w;
  best->voxel_count = std::max(best->voxel_count, voxels);
  return best->id;
}

std::vector<QueryHit> RetrievalMap::query_text(const Eigen::VectorXd& q, std::size_t top_n) const {
  std::vector<QueryHit> hits;
  hits.reserve(entries_.size());
  for (const auto& e : entries_) {
    if (e.embedding.size() != q.size()) throw InputError("query_text: embedding dim mismatch");
    hits.push_back(QueryHit{e.id, e.embedding.dot(q), e.center, e.weight});
  }
  std::sort(hits.begin(), hits.end(), [](const QueryHit& a, const QueryHit& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.id < b.id;
  });
  if (hits.size() > top_n) hits.resize(top_n);
  return hits;
}

RetrievalMap RetrievalMap::restore(double alpha, double eps_dist, std::vector<InstanceEntry> entries,
                                   std::uint64_t next_id) {
  RetrievalMap map(alpha, eps_dist);
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const auto& e : entries) {
    if (e.id >= next_id) throw InputError("RetrievalMap::restore: entry id beyond next_id");
  }
  map.entries_ = std::move(entries);
  map.next_id_ = next_id;
  return map;
}

}  // namespace o2v
