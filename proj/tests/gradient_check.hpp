// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Central-difference check of loss_and_gradients in double precision.

#pragma once

#include <algorithm>
#include <random>

#include "o2v/renderer.hpp"

namespace o2v::testing {

struct GradientCheck {
  double max_rel_error = 0;
  std::size_t mlp_checked = 0;
  std::size_t feature_checked = 0;
};

/// Relative error with an absolute floor on the denominator, so gradients at the level
/// of finite-difference truncation noise do not dominate.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// One random mini-scene: random decoders and features, a few rays with random targets.
/// Checks every MLP parameter when `all_mlp` is set (else `mlp_samples` random ones) and
/// `feature_cells` random touched cells, one random component of each feature vector.
inline GradientCheck check_gradients(std::uint64_t seed, bool all_mlp, int mlp_samples, int feature_cells,
                                     double h = 1e-4) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  VoxelField<double> field(SceneBounds{Vec3::Constant(-1), Vec3::Constant(1)}, 0.16, FieldDims{16, 16, 8});
  Decoders<double> dec = make_decoders<double>(16, 16, 4, 32, 3, seed, false);
  const double lambda_c = 0.2;

  SamplingConfig sampling;
  sampling.n_strat = 12;
  sampling.n_surf = 6;
  sampling.near = 0.1;
  sampling.far = 2.5;
  sampling.surface_half_width = 0.3;
  std::vector<TrainRay> rays(3);
  std::vector<RaySampleBatch> samples(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    rays[r].ray.origin = Vec3(0.3 * u(rng), 0.3 * u(rng), -0.8);
    rays[r].ray.direction = Vec3(0.3 * u(rng), 0.3 * u(rng), 1).normalized();
    rays[r].ray.axial = rays[r].ray.direction.z();
    rays[r].depth = r == 0 ? 0.0 : 0.8 + 0.4 * u(rng);
    rays[r].rgb = Eigen::Vector3d(0.5 + 0.5 * u(rng), 0.5 + 0.5 * u(rng), 0.5 + 0.5 * u(rng));
    Rng srng(seed * 31 + r);
    samples[r] = sample_ray(rays[r].ray, field.bounds(), sampling, rays[r].depth, &srng);
  }
  const std::span<const TrainRay> ray_span(rays);
  const std::span<const RaySampleBatch> sample_span(samples);

  Gradients<double> grads;
  loss_and_gradients(field, dec, ray_span, sample_span, lambda_c, &grads);
  // touched cells now exist; give them random features and recompute
  for (const auto& [key, cell] : field.cells()) {
    if (cell.slot < 0) continue;
    for (int j = 0; j < 16; ++j) {
      field.geo(cell.slot)[j] = 0.5 * u(rng);
      field.color(cell.slot)[j] = 0.5 * u(rng);
    }
  }
  loss_and_gradients(field, dec, ray_span, sample_span, lambda_c, &grads);
  auto total = [&](const Decoders<double>& d) {
    return loss_and_gradients(field, d, ray_span, sample_span, lambda_c, static_cast<Gradients<double>*>(nullptr)).total();
  };

  GradientCheck out;
  auto check_mlp = [&](bool occupancy, const MlpParams<double>& g) {
    const Eigen::Index n = g.size();
    auto visit = [&](Eigen::Index i) {
      Decoders<double> plus = dec, minus = dec;
      (occupancy ? plus.occupancy : plus.color).params().flat(i) += h;
      (occupancy ? minus.occupancy : minus.color).params().flat(i) -= h;
      const double numeric = (total(plus) - total(minus)) / (2 * h);
      out.max_rel_error = std::max(out.max_rel_error, relative_error(g.flat(i), numeric));
      ++out.mlp_checked;
    };
    if (all_mlp) {
      for (Eigen::Index i = 0; i < n; ++i) visit(i);
    } else {
      for (int k = 0; k < mlp_samples; ++k) visit(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
    }
  };
  check_mlp(true, grads.occupancy);
  check_mlp(false, grads.color);

  std::vector<std::int32_t> touched = grads.touched;
  std::shuffle(touched.begin(), touched.end(), rng);
  touched.resize(std::min<std::size_t>(touched.size(), static_cast<std::size_t>(feature_cells)));
  for (const std::int32_t slot : touched) {
    for (int kind = 0; kind < 2; ++kind) {
      const int j = std::uniform_int_distribution<int>(0, 15)(rng);
      double& x = kind == 0 ? field.geo(slot)[j] : field.color(slot)[j];
      const double analytic = (kind == 0 ? grads.geo : grads.color_features)[static_cast<std::size_t>(slot) * 16 + j];
      const double saved = x;
      x = saved + h;
      const double lp = total(dec);
      x = saved - h;
      const double lm = total(dec);
      x = saved;
      out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic, (lp - lm) / (2 * h)));
      ++out.feature_checked;
    }
  }
  return out;
}

}  // namespace o2v::testing
