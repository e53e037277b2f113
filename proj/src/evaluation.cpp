// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/evaluation.hpp"

#include <map>

#include "o2v/query.hpp"

namespace o2v {

std::vector<EvalReport> evaluate_language_variants(const MapSnapshot& snapshot,
                                                   std::span<const VoxelField<float>* const> language,
                                                   const SynthScene& scene, const std::vector<QuerySpec>& queries,
                                                   const TextEmbedder& embed,
                                                   const std::function<Pose(std::uint64_t)>& pose_of,
                                                   const EvalOptions& options) {
  if (queries.empty()) throw InputError("evaluate_map: no queries");
  if (language.empty()) throw InputError("evaluate_map: no language fields");
  const CameraIntrinsics& intr = snapshot.intrinsics;
  const std::size_t n_var = language.size();

  std::map<std::uint64_t, std::vector<std::size_t>> users;
  std::vector<Eigen::VectorXd> embeddings;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const QuerySpec& q = queries[qi];
    if (q.frames.empty()) throw InputError("evaluate_map: query '" + q.text + "' has no frames");
    for (const std::uint64_t id : q.frames) users[id].push_back(qi);
    embeddings.push_back(embed(q.text));
  }

  // masks[variant][query][frame id] = (predicted, truth)
  using MaskPair = std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>>;
  std::vector<std::vector<std::map<std::uint64_t, MaskPair>>> masks(
      n_var, std::vector<std::map<std::uint64_t, MaskPair>>(queries.size()));
  for (const auto& [id, query_ids] : users) {
    const Pose pose = pose_of(id);
    const GtView gt = render_gt(scene, pose, intr);
    std::vector<std::uint8_t> keep(gt.depth.size(), 1);
    if (options.region) {
      for (int v = 0; v < intr.height; ++v) {
        for (int u = 0; u < intr.width; ++u) {
          const auto i = static_cast<std::size_t>(v) * static_cast<std::size_t>(intr.width) + static_cast<std::size_t>(u);
          const double d = gt.depth[static_cast<Eigen::Index>(i)];
          keep[i] = d > 0 && options.region(pixel_to_ray(intr, pose, u, v).at_depth(d));
        }
      }
    }
    const ViewGeometry view = render_geometry(snapshot, pose, intr);
    for (std::size_t k = 0; k < n_var; ++k) {
      const auto features = render_language_view(view, *language[k]);
      for (const std::size_t qi : query_ids) {
        const RelevanceMap rel = relevance_from_features(view, features, queries[qi].text, embeddings[qi]);
        std::vector<std::uint8_t> p = rel.mask(options.tau);
        std::vector<std::uint8_t> t = label_mask(scene, gt, queries[qi].text);
        for (std::size_t i = 0; i < keep.size(); ++i) {
          if (!keep[i]) p[i] = t[i] = 0;
        }
        masks[k][qi][id] = {std::move(p), std::move(t)};
      }
    }
  }

  std::vector<EvalReport> reports(n_var);
  for (std::size_t k = 0; k < n_var; ++k) {
    double total = 0;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
      QueryScore score;
      score.text = queries[qi].text;
      std::vector<std::vector<std::uint8_t>> predicted, truth;
      for (const std::uint64_t id : queries[qi].frames) {
        const MaskPair& m = masks[k][qi].at(id);
        score.frames.push_back(id);
        score.iou.push_back(mask_iou(m.first, m.second));
        predicted.push_back(m.first);
        truth.push_back(m.second);
      }
      score.mean_iou = evaluate_iou(predicted, truth);
      total += score.mean_iou;
      reports[k].queries.push_back(std::move(score));
    }
    reports[k].mean_iou = total / static_cast<double>(queries.size());
  }
  return reports;
}

EvalReport evaluate_map(const MapSnapshot& snapshot, const SynthScene& scene, const std::vector<QuerySpec>& queries,
                        const TextEmbedder& embed, const std::function<Pose(std::uint64_t)>& pose_of,
                        const EvalOptions& options) {
  const VoxelField<float>* field = &snapshot.field;
  return evaluate_language_variants(snapshot, std::span<const VoxelField<float>* const>(&field, 1), scene, queries,
                                    embed, pose_of, options)
      .front();
}

}  // namespace o2v
