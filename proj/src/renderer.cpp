// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/renderer.hpp"

#include <algorithm>
#include <cmath>

namespace o2v {

RaySampleBatch sample_ray(const Ray& ray, const SceneBounds& bounds, const SamplingConfig& cfg, double gt_depth,
                          Rng* rng) {
  RaySampleBatch batch;
  const auto hit = bounds.intersect(ray);
  if (!hit) return batch;
  const double lo = std::max(cfg.near, hit->first * ray.axial);
  const double hi = std::min(cfg.far, hit->second * ray.axial);
  if (!(lo < hi) || cfg.n_strat <= 0) return batch;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto& depths = batch.depths;
  depths.reserve(static_cast<std::size_t>(cfg.n_strat + cfg.n_surf));
  const double width = (hi - lo) / cfg.n_strat;
  for (int k = 0; k < cfg.n_strat; ++k) {
    const double u = rng != nullptr ? unit(*rng) : 0.5;
    depths.push_back(lo + (k + u) * width);
  }
  if (gt_depth > 0 && cfg.n_surf > 0) {
    const double a = std::max(lo, gt_depth - cfg.surface_half_width);
    const double b = std::min(hi, gt_depth + cfg.surface_half_width);
    if (a < b) {
      const double step = (b - a) / cfg.n_surf;
      for (int k = 0; k < cfg.n_surf; ++k) {
        depths.push_back(rng != nullptr ? a + (b - a) * unit(*rng) : a + (k + 0.5) * step);
      }
    }
  }
  std::sort(depths.begin(), depths.end());
  depths.erase(std::unique(depths.begin(), depths.end()), depths.end());

  batch.points.reserve(depths.size());
  for (const double d : depths) {
    batch.points.push_back(ray.at_depth(d).cwiseMax(bounds.min).cwiseMin(bounds.max));
  }
  return batch;
}

double median_termination_depth(std::span<const double> depths, std::span<const double> weights) {
  if (depths.size() != weights.size()) throw InputError("median_termination_depth: size mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (acc >= 0.5) return depths[i];
  }
  return depths.empty() ? 0.0 : depths.back();
}

template <typename Scalar>
std::vector<Scalar> termination_weights(std::span<const Scalar> occupancy) {
  std::vector<Scalar> w(occupancy.size());
  Scalar transmittance(1);
  for (std::size_t i = 0; i < occupancy.size(); ++i) {
    w[i] = occupancy[i] * transmittance;
    transmittance *= Scalar(1) - occupancy[i];
  }
  return w;
}

std::pair<double, Eigen::Vector3d> render_depth_color(std::span<const double> depths, std::span<const double> weights,
                                                      std::span<const Eigen::Vector3d> colors) {
  if (depths.size() != weights.size() || colors.size() != weights.size()) {
    throw InputError("render_depth_color: size mismatch");
  }
  double d = 0;
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    d += weights[i] * depths[i];
    c += weights[i] * colors[i];
  }
  return {d, c};
}

template <typename Scalar>
std::optional<Eigen::VectorXd> render_language(const VoxelField<Scalar>& field, const RaySampleBatch& batch,
                                               std::span<const double> weights, double rendered_depth,
                                               double half_width) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(field.dims().language);
  std::size_t contributing = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (std::abs(batch.depths[i] - rendered_depth) > half_width || !(weights[i] > 0)) continue;
    const LanguageCell* cell = field.language_at(batch.points[i]);
    if (cell == nullptr || cell->empty()) continue;
    sum += weights[i] * cell->fused;
    ++contributing;
  }
  if (contributing == 0) return std::nullopt;
  sum /= static_cast<double>(contributing);
  const double n = sum.norm();
  if (!(n > 1e-12)) return std::nullopt;
  return sum / n;
}

LossReport compute_losses(std::span<const double> pred_depth, std::span<const double> gt_depth,
                          std::span<const Eigen::Vector3d> pred_rgb, std::span<const Eigen::Vector3d> gt_rgb,
                          double lambda_c) {
  const std::size_t m = pred_depth.size();
  if (m == 0) throw InputError("compute_losses: no pixels");
  if (gt_depth.size() != m || pred_rgb.size() != m || gt_rgb.size() != m) {
    throw InputError("compute_losses: size mismatch");
  }
  LossReport report;
  report.lambda_c = lambda_c;
  report.pixels = m;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (gt_depth[i] > 0) {
      const double e = gt_depth[i] - pred_depth[i];
      report.depth_loss += e * e;
      ++valid;
    }
    report.color_loss += (gt_rgb[i] - pred_rgb[i]).squaredNorm();
  }
  if (valid > 0) report.depth_loss /= static_cast<double>(valid);
  report.color_loss /= static_cast<double>(m);
  return report;
}

SamplingConfig training_sampling(const Config& config) {
  return {config.n_strat, config.n_surf, config.near, config.far, config.surface_band};
}

RenderSettings render_settings(const Config& config) {
  RenderSettings s;
  s.coarse = {config.render_n_strat, 0, config.near, config.far, config.window_edges * config.voxel_edge};
  s.fine = {config.render_n_strat, config.render_n_surf, config.near, config.far, config.render_band};
  s.language_half_width = config.window_edges * config.voxel_edge;
  return s;
}

namespace {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Fills decoder inputs for every sample; `corners` receives the trilinear neighbors.
template <typename Scalar, typename Field>
void build_inputs(Field& field, const PositionalEncoding& pe, std::span<const Vec3* const> points,
                  MatrixX<Scalar>& x_occ, MatrixX<Scalar>* x_col,
                  std::vector<typename VoxelField<Scalar>::Corners>* corners) {
  const int pe_dim = pe.dim();
  const int dg = field.dims().geo;
  const int dc = field.dims().color;
  const auto n = static_cast<Eigen::Index>(points.size());
  x_occ.resize(pe_dim + dg, n);
  if (x_col != nullptr) x_col->resize(pe_dim + dc, n);
  if (corners != nullptr) corners->resize(points.size());
  for (Eigen::Index s = 0; s < n; ++s) {
    const Vec3& p = *points[static_cast<std::size_t>(s)];
    auto col = x_occ.col(s);
    pe.encode(field.bounds().normalize(p), col.head(pe_dim));
    typename VoxelField<Scalar>::Corners cs;
    if constexpr (std::is_const_v<Field>) {
      cs = field.corners(p);
    } else {
      cs = field.touch(p);
    }
    col.tail(dg).setZero();
    if (x_col != nullptr) {
      x_col->col(s).head(pe_dim) = col.head(pe_dim);
      x_col->col(s).tail(dc).setZero();
    }
    for (const auto& c : cs) {
      if (c.slot < 0 || c.weight == Scalar(0)) continue;
      col.tail(dg).noalias() += c.weight * field.geo(c.slot);
      if (x_col != nullptr) x_col->col(s).tail(dc).noalias() += c.weight * field.color(c.slot);
    }
    if (corners != nullptr) (*corners)[static_cast<std::size_t>(s)] = cs;
  }
}

}  // namespace

template <typename Scalar>
LossReport loss_and_gradients(VoxelField<Scalar>& field, const Decoders<Scalar>& decoders,
                              std::span<const TrainRay> rays, std::span<const RaySampleBatch> samples,
                              double lambda_c, Gradients<Scalar>* grads) {
  if (rays.empty()) throw InputError("loss_and_gradients: no rays");
  if (rays.size() != samples.size()) throw InputError("loss_and_gradients: one sample batch per ray required");

  std::vector<std::size_t> offsets(rays.size() + 1, 0);
  std::vector<const Vec3*> points;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    offsets[r + 1] = offsets[r] + samples[r].size();
    for (const auto& p : samples[r].points) points.push_back(&p);
  }

  MatrixX<Scalar> x_occ, x_col;
  std::vector<typename VoxelField<Scalar>::Corners> corners;
  build_inputs<Scalar>(field, decoders.encoding, std::span<const Vec3* const>(points), x_occ, &x_col,
                       grads != nullptr ? &corners : nullptr);

  typename Mlp<Scalar>::Cache cache_o, cache_c;
  const MatrixX<Scalar> occ = decoders.occupancy.forward(x_occ, grads != nullptr ? &cache_o : nullptr);
  const MatrixX<Scalar> col = decoders.color.forward(x_col, grads != nullptr ? &cache_c : nullptr);

  std::size_t valid = 0;
  for (const auto& r : rays) valid += r.depth > 0 ? 1 : 0;
  const double m = static_cast<double>(rays.size());
  const double md = static_cast<double>(std::max<std::size_t>(valid, 1));

  MatrixX<Scalar> d_occ, d_col;
  if (grads != nullptr) {
    d_occ.setZero(1, x_occ.cols());
    d_col.setZero(3, x_col.cols());
  }

  LossReport report;
  report.lambda_c = lambda_c;
  report.pixels = rays.size();
  std::vector<double> w, trans, a;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const std::size_t begin = offsets[r];
    const std::size_t n = offsets[r + 1] - begin;
    w.assign(n, 0.0);
    trans.assign(n, 0.0);
    double t = 1.0, depth = 0.0;
    Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const double o = static_cast<double>(occ(0, static_cast<Eigen::Index>(begin + i)));
      trans[i] = t;
      w[i] = o * t;
      t *= 1.0 - o;
      depth += w[i] * samples[r].depths[i];
      rgb += w[i] * col.col(static_cast<Eigen::Index>(begin + i)).template cast<double>();
    }
    const double gt = rays[r].depth;
    double g_depth = 0.0;
    if (gt > 0) {
      report.depth_loss += (depth - gt) * (depth - gt);
      g_depth = 2.0 * (depth - gt) / md;
    }
    const Eigen::Vector3d err = rgb - rays[r].rgb;
    report.color_loss += err.squaredNorm();
    const Eigen::Vector3d g_rgb = 2.0 * lambda_c * err / m;

    if (grads == nullptr) continue;
    // dL/do_i = T_i * (a_i - R_i), with a_i the per-sample payload gradient and
    // R_i = o_{i+1} a_{i+1} + (1 - o_{i+1}) R_{i+1} accumulated from the back.
    a.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = col.col(static_cast<Eigen::Index>(begin + i)).template cast<double>();
      a[i] = g_depth * samples[r].depths[i] + g_rgb.dot(c);
    }
    double tail = 0.0;
    for (std::size_t i = n; i-- > 0;) {
      const auto s = static_cast<Eigen::Index>(begin + i);
      d_occ(0, s) = static_cast<Scalar>(trans[i] * (a[i] - tail));
      d_col.col(s) = (w[i] * g_rgb).template cast<Scalar>();
      const double o = static_cast<double>(occ(0, s));
      tail = o * a[i] + (1.0 - o) * tail;
    }
  }
  report.depth_loss /= md;
  report.color_loss /= m;
  if (valid == 0) report.depth_loss = 0;

  if (grads == nullptr) return report;

  grads->occupancy = decoders.occupancy.params().zeros_like();
  grads->color = decoders.color.params().zeros_like();
  MatrixX<Scalar> dx_occ, dx_col;
  decoders.occupancy.backward(cache_o, d_occ, grads->occupancy, &dx_occ);
  decoders.color.backward(cache_c, d_col, grads->color, &dx_col);

  const int dg = field.dims().geo;
  const int dc = field.dims().color;
  const std::size_t slots = field.slot_capacity();
  grads->geo.assign(slots * static_cast<std::size_t>(dg), Scalar(0));
  grads->color_features.assign(slots * static_cast<std::size_t>(dc), Scalar(0));
  grads->touched.clear();
  std::vector<std::uint8_t> seen(slots, 0);
  for (std::size_t s = 0; s < corners.size(); ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    for (const auto& c : corners[s]) {
      if (c.slot < 0) continue;
      const auto slot = static_cast<std::size_t>(c.slot);
      if (!seen[slot]) {
        seen[slot] = 1;
        grads->touched.push_back(c.slot);
      }
      if (c.weight == Scalar(0)) continue;
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(grads->geo.data() + slot * static_cast<std::size_t>(dg), dg)
          .noalias() += c.weight * dx_occ.col(si).tail(dg);
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(grads->color_features.data() + slot * static_cast<std::size_t>(dc),
                                                           dc)
          .noalias() += c.weight * dx_col.col(si).tail(dc);
    }
  }
  return report;
}

template <typename Scalar>
std::vector<RenderOutput> render_samples(const VoxelField<Scalar>& field, const Decoders<Scalar>& decoders,
                                         std::span<const RaySampleBatch> samples, bool color) {
  std::vector<RenderOutput> out(samples.size());
  constexpr std::size_t kChunkSamples = 1 << 15;
  std::size_t r0 = 0;
  std::vector<const Vec3*> points;
  while (r0 < samples.size()) {
    std::size_t r1 = r0;
    points.clear();
    while (r1 < samples.size() && (points.empty() || points.size() + samples[r1].size() <= kChunkSamples)) {
      for (const auto& p : samples[r1].points) points.push_back(&p);
      ++r1;
    }
    MatrixX<Scalar> x_occ, x_col;
    build_inputs<Scalar>(field, decoders.encoding, std::span<const Vec3* const>(points), x_occ,
                         color ? &x_col : nullptr, nullptr);
    const MatrixX<Scalar> occ = decoders.occupancy.forward(x_occ);
    MatrixX<Scalar> col;
    if (color) col = decoders.color.forward(x_col);

    std::size_t s = 0;
    for (std::size_t r = r0; r < r1; ++r) {
      RenderOutput& o = out[r];
      const std::size_t n = samples[r].size();
      o.weights.resize(n);
      double t = 1.0;
      for (std::size_t i = 0; i < n; ++i, ++s) {
        const auto si = static_cast<Eigen::Index>(s);
        const double occ_i = static_cast<double>(occ(0, si));
        o.weights[i] = occ_i * t;
        t *= 1.0 - occ_i;
        o.depth += o.weights[i] * samples[r].depths[i];
        if (color) o.rgb += o.weights[i] * col.col(si).template cast<double>();
      }
    }
    r0 = r1;
  }
  return out;
}

template <typename Scalar>
std::vector<RenderOutput> render_rays(const VoxelField<Scalar>& field, const Decoders<Scalar>& decoders,
                                      std::span<const Ray> rays, const RenderSettings& settings,
                                      std::vector<RaySampleBatch>* fine_samples) {
  std::vector<RaySampleBatch> coarse(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    coarse[r] = sample_ray(rays[r], field.bounds(), settings.coarse, 0.0, nullptr);
  }
  const auto first = render_samples(field, decoders, std::span<const RaySampleBatch>(coarse), false);
  std::vector<RaySampleBatch> fine(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    fine[r] = sample_ray(rays[r], field.bounds(), settings.fine,
                         median_termination_depth(coarse[r].depths, first[r].weights), nullptr);
  }
  auto out = render_samples(field, decoders, std::span<const RaySampleBatch>(fine), settings.color);
  if (settings.language) {
    for (std::size_t r = 0; r < rays.size(); ++r) {
      out[r].language = render_language(field, fine[r], out[r].weights, out[r].depth, settings.language_half_width);
    }
  }
  if (fine_samples != nullptr) *fine_samples = std::move(fine);
  return out;
}

template std::vector<float> termination_weights<float>(std::span<const float>);
template std::vector<double> termination_weights<double>(std::span<const double>);
template std::optional<Eigen::VectorXd> render_language(const VoxelField<float>&, const RaySampleBatch&,
                                                        std::span<const double>, double, double);
template std::optional<Eigen::VectorXd> render_language(const VoxelField<double>&, const RaySampleBatch&,
                                                        std::span<const double>, double, double);
template LossReport loss_and_gradients(VoxelField<float>&, const Decoders<float>&, std::span<const TrainRay>,
                                       std::span<const RaySampleBatch>, double, Gradients<float>*);
template LossReport loss_and_gradients(VoxelField<double>&, const Decoders<double>&, std::span<const TrainRay>,
                                       std::span<const RaySampleBatch>, double, Gradients<double>*);
template std::vector<RenderOutput> render_samples(const VoxelField<float>&, const Decoders<float>&,
                                                  std::span<const RaySampleBatch>, bool);
template std::vector<RenderOutput> render_samples(const VoxelField<double>&, const Decoders<double>&,
                                                  std::span<const RaySampleBatch>, bool);
template std::vector<RenderOutput> render_rays(const VoxelField<float>&, const Decoders<float>&, std::span<const Ray>,
                                               const RenderSettings&, std::vector<RaySampleBatch>*);
template std::vector<RenderOutput> render_rays(const VoxelField<double>&, const Decoders<double>&,
                                               std::span<const Ray>, const RenderSettings&,
                                               std::vector<RaySampleBatch>*);

}  // namespace o2v
