// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/query.hpp"

#include <algorithm>


namespace o2v {
namespace {

std::vector<Ray> image_rays(const Pose& pose, const CameraIntrinsics& intrinsics) {
  intrinsics.validate();
  pose.validate();
  std::vector<Ray> rays;
  rays.reserve(intrinsics.pixel_count());
  for (int v = 0; v < intrinsics.height; ++v) {
    for (int u = 0; u < intrinsics.width; ++u) rays.push_back(pixel_to_ray(intrinsics, pose, u, v));
  }
  return rays;
}

}  // namespace

ViewRender render_view(const MapSnapshot& snapshot, const Pose& pose, const CameraIntrinsics& intrinsics) {
  const auto rays = image_rays(pose, intrinsics);
  const RenderSettings settings = render_settings(snapshot.config);
  const auto out = render_rays(snapshot.field, snapshot.decoders, std::span<const Ray>(rays), settings);
  const auto n = static_cast<Eigen::Index>(out.size());
  ViewRender view{{intrinsics.width, intrinsics.height, RgbBuffer(n, 3)},
                  {intrinsics.width, intrinsics.height, DepthBuffer(n)}};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = out[static_cast<std::size_t>(i)];
    view.rgb.pixels.row(i) = o.rgb.transpose().cast<float>();
    view.depth.values[i] = static_cast<float>(o.depth);
  }
  return view;
}

std::vector<std::uint8_t> RelevanceMap::mask(double tau) const {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(relevance.size()), 0);
  for (Eigen::Index i = 0; i < relevance.size(); ++i) m[static_cast<std::size_t>(i)] = relevance[i] >= tau ? 1 : 0;
  return m;
}

Eigen::VectorXd normalize_relevance(const Eigen::VectorXd& raw, const std::vector<std::uint8_t>& present) {
  if (present.size() != static_cast<std::size_t>(raw.size())) throw InputError("normalize_relevance: size mismatch");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (!present[static_cast<std::size_t>(i)]) continue;
    lo = std::min(lo, raw[i]);
    hi = std::max(hi, raw[i]);
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (!present[static_cast<std::size_t>(i)]) continue;
    out[i] = hi > lo ? (raw[i] - lo) / (hi - lo) : raw[i];
  }
  return out;
}

ViewGeometry render_geometry(const MapSnapshot& snapshot, const Pose& pose, const CameraIntrinsics& intrinsics) {
  const auto rays = image_rays(pose, intrinsics);
  RenderSettings settings = render_settings(snapshot.config);
  settings.color = false;
  ViewGeometry view{intrinsics, pose, settings.language_half_width, {}, {}};
  view.outputs = render_rays(snapshot.field, snapshot.decoders, std::span<const Ray>(rays), settings, &view.samples);
  return view;
}

std::vector<std::optional<Eigen::VectorXd>> render_language_view(const ViewGeometry& view,
                                                                 const VoxelField<float>& field) {
  std::vector<std::optional<Eigen::VectorXd>> out(view.outputs.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = render_language(field, view.samples[i], view.outputs[i].weights, view.outputs[i].depth,
                             view.language_half_width);
  }
  return out;
}

RelevanceMap relevance_from_features(const ViewGeometry& view,
                                     const std::vector<std::optional<Eigen::VectorXd>>& features,
                                     const std::string& text, const Eigen::VectorXd& text_embedding) {
  const double norm = text_embedding.norm();
  if (!(norm > 0)) throw InputError("render_relevance: zero text embedding");
  const Eigen::VectorXd q = text_embedding / norm;
  RelevanceMap map;
  map.width = view.intrinsics.width;
  map.height = view.intrinsics.height;
  map.pose = view.pose;
  map.query = text;
  map.raw = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(features.size()));
  map.present.assign(features.size(), 0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!features[i]) continue;
    if (features[i]->size() != q.size()) throw InputError("render_relevance: text embedding dim differs from the map");
    map.present[i] = 1;
    map.raw[static_cast<Eigen::Index>(i)] = std::max(0.0, features[i]->dot(q));
  }
  map.relevance = normalize_relevance(map.raw, map.present);
  return map;
}

RelevanceMap render_relevance(const MapSnapshot& snapshot, const Pose& pose, const CameraIntrinsics& intrinsics,
                              const std::string& text, const Eigen::VectorXd& text_embedding) {
  if (text_embedding.size() != snapshot.field.dims().language) {
    throw InputError("render_relevance: text embedding dim differs from the map");
  }
  if (!(text_embedding.norm() > 0)) throw InputError("render_relevance: zero text embedding");
  const ViewGeometry view = render_geometry(snapshot, pose, intrinsics);
  return relevance_from_features(view, render_language_view(view, snapshot.field), text, text_embedding);
}

RelevanceMap render_relevance(const MapSnapshot& snapshot, const Pose& pose, const CameraIntrinsics& intrinsics,
                              const std::string& text, const PerceptionProvider& provider) {
  return render_relevance(snapshot, pose, intrinsics, text, provider.embed_text(text));
}

}  // namespace o2v
