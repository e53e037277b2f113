// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/language_fusion.hpp"

#include <cmath>
#include <map>

namespace o2v {

FusionSettings fusion_settings(const Config& config) {
  FusionSettings s;
  s.voting = config.voting;
  s.split = config.split;
  s.tau_split = config.tau_split;
  s.tau_same = config.tau_same;
  s.q_max = config.q_max;
  return s;
}

void integrate_observation(LanguageCell& cell, const Eigen::VectorXd& f, double k, double confidence,
                           const FusionSettings& settings) {
  if (!(k > 0) || !std::isfinite(k)) throw InputError("integrate_observation: k must be positive");
  if (std::abs(f.norm() - 1.0) > 1e-6) throw InputError("integrate_observation: embedding must be unit length");
  if (cell.fused.size() != f.size()) {
    if (cell.accumulated > 0) throw InputError("integrate_observation: embedding dim mismatch");
    cell.fused = Eigen::VectorXd::Zero(f.size());
  }

  if (!settings.voting) {
    cell.fused = f;
    cell.accumulated = k;
    cell.queue.assign(1, ObservationRecord{f, confidence, k});
    return;
  }

  const double total = cell.accumulated + k;
  cell.fused = (cell.accumulated * cell.fused + k * f) / total;
  cell.accumulated = total;

  for (auto& rec : cell.queue) {
    if (rec.embedding.dot(f) >= settings.tau_same) {
      const double w = rec.weight + k;
      const Eigen::VectorXd merged = rec.weight * rec.embedding + k * f;
      const double n = merged.norm();
      if (n > 0) rec.embedding = merged / n;
      rec.confidence = (rec.weight * rec.confidence + k * confidence) / w;
      rec.weight = w;
      return;
    }
  }
  cell.queue.push_back(ObservationRecord{f, confidence, k});
  if (static_cast<int>(cell.queue.size()) > std::max(settings.q_max, 1)) {
    std::size_t victim = 0;
    for (std::size_t i = 1; i < cell.queue.size(); ++i) {
      if (cell.queue[i].weight * cell.queue[i].confidence < cell.queue[victim].weight * cell.queue[victim].confidence) {
        victim = i;
      }
    }
    cell.queue.erase(cell.queue.begin() + static_cast<std::ptrdiff_t>(victim));
  }
}

bool detect_conflict(std::span<const Eigen::VectorXd> staged, const Eigen::VectorXd& f, double tau_split) {
  for (const auto& s : staged) {
    if (s.dot(f) < tau_split) return true;
  }
  return false;
}

int dominant_record(const LanguageCell& cell) {
  int best = -1;
  for (std::size_t i = 0; i < cell.queue.size(); ++i) {
    if (best < 0 || cell.queue[i].weight > cell.queue[static_cast<std::size_t>(best)].weight) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

template <typename Scalar>
IntegrationReport integrate_frame(VoxelField<Scalar>& field, const RGBDFrame& frame,
                                  const FramePerception& perception, const FusionSettings& settings) {
  IntegrationReport report;
  const int w = frame.intrinsics.width;
  const std::size_t n = frame.intrinsics.pixel_count();

  using Groups = std::map<std::size_t, std::vector<Vec3>>;
  std::map<VoxelKey, Groups> staged;
  std::vector<Eigen::VectorXd> embeddings(perception.masks.size());
  for (std::size_t j = 0; j < perception.masks.size(); ++j) {
    const InstanceMask& mask = perception.masks[j];
    if (mask.bitmap.size() != n) throw InputError("integrate_frame: mask size differs from frame");
    embeddings[j] = mask.embedding.cast<double>();
    embeddings[j] /= embeddings[j].norm();
    MaskSummary summary;
    summary.mask = j;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask.bitmap[i]) continue;
      const auto p = backproject(frame, static_cast<int>(i % static_cast<std::size_t>(w)),
                                 static_cast<int>(i / static_cast<std::size_t>(w)));
      if (!p || !field.bounds().contains(*p)) continue;
      staged[field.cell_at(*p)][j].push_back(*p);
      summary.centroid += *p;
      ++summary.points;
    }
    if (summary.points > 0) summary.centroid /= static_cast<double>(summary.points);
    report.pixels += summary.points;
    report.masks.push_back(summary);
  }

  for (const auto& [key, groups] : staged) {
    for (const auto& [j, pts] : groups) ++report.masks[j].voxels;
  }

  std::map<VoxelKey, Groups> routed;
  for (auto& [key, groups] : staged) {
    bool conflict = false;
    if (settings.split && key.level == 0) {
      for (int rank = 0; rank < kScaleRanks && !conflict; ++rank) {
        std::vector<Eigen::VectorXd> same_rank;
        for (const auto& [j, pts] : groups) {
          if (perception.masks[j].scale_rank != rank) continue;
          if (detect_conflict(same_rank, embeddings[j], settings.tau_split)) {
            conflict = true;
            break;
          }
          same_rank.push_back(embeddings[j]);
        }
      }
    }
    if (!conflict) {
      auto& dst = routed[key];
      for (auto& [j, pts] : groups) dst[j] = std::move(pts);
      continue;
    }
    field.split_voxel(key);
    ++report.splits;
    for (auto& [j, pts] : groups) {
      for (const Vec3& p : pts) routed[field.cell_at(p)][j].push_back(p);
    }
  }

  for (const auto& [key, groups] : routed) {
    LanguageCell* cell = nullptr;
    for (const auto& [j, pts] : groups) {
      const InstanceMask& mask = perception.masks[j];
      const double k = static_cast<double>(pts.size()) * mask.confidence *
                       settings.scale_weights[std::min<std::size_t>(mask.scale_rank, kScaleRanks - 1)];
      if (!(k > 0)) continue;
      if (cell == nullptr) cell = &field.language_mut(key);
      integrate_observation(*cell, embeddings[j], k, mask.confidence, settings);
      ++report.observations;
    }
    if (cell != nullptr) ++report.voxels_touched;
  }
  return report;
}

template IntegrationReport integrate_frame(VoxelField<float>&, const RGBDFrame&, const FramePerception&,
                                           const FusionSettings&);
template IntegrationReport integrate_frame(VoxelField<double>&, const RGBDFrame&, const FramePerception&,
                                           const FusionSettings&);

}  // namespace o2v
