// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Ray sampling, occupancy-based volume rendering of depth, color and language, the
// photometric/geometric losses and their exact gradients.

#pragma once

#include <Eigen/Core>

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "o2v/camera.hpp"
#include "o2v/config.hpp"
#include "o2v/decoder.hpp"
#include "o2v/voxel_field.hpp"

namespace o2v {

using Rng = std::mt19937_64;

struct SamplingConfig {
  int n_strat = 32;
  int n_surf = 8;
  double near = 0.1;
  double far = 6.0;
  double surface_half_width = 0.64;  ///< surface samples cover depth +/- this
};

/// Samples along one ray, parameterized by plane depth.
struct RaySampleBatch {
  std::vector<double> depths;  ///< strictly increasing
  std::vector<Vec3> points;

  [[nodiscard]] bool empty() const { return depths.empty(); }
  [[nodiscard]] std::size_t size() const { return depths.size(); }
};

struct RenderOutput {
  double depth = 0;
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
  std::optional<Eigen::VectorXd> language;
  std::vector<double> weights;
};

struct LossReport {
  double depth_loss = 0;
  double color_loss = 0;
  double lambda_c = 0.2;
  std::size_t pixels = 0;

  [[nodiscard]] double total() const { return depth_loss + lambda_c * color_loss; }
};

/// Stratified samples in [near, far] clipped to `bounds`, plus `n_surf` samples within
/// gt_depth +/- surface_half_width when gt_depth > 0. With `rng == nullptr` every sample
/// sits at the middle of its stratum. Returns an empty batch if the ray misses `bounds`.
RaySampleBatch sample_ray(const Ray& ray, const SceneBounds& bounds, const SamplingConfig& cfg, double gt_depth,
                          Rng* rng);

/// First sample depth at which the accumulated weight reaches one half; the last sample
/// depth when it never does, 0 for an empty ray.
double median_termination_depth(std::span<const double> depths, std::span<const double> weights);

/// w_i = o_i * prod_{j<i} (1 - o_j)
template <typename Scalar>
std::vector<Scalar> termination_weights(std::span<const Scalar> occupancy);

/// D = sum w_i d_i, I = sum w_i c_i (no normalization).
std::pair<double, Eigen::Vector3d> render_depth_color(std::span<const double> depths, std::span<const double> weights,
                                                      std::span<const Eigen::Vector3d> colors);

/// Weighted language feature from samples within `half_width` of the rendered depth.
/// Each contributing sample adds w_i times the voted feature of its cell; the sum is
/// divided by the number of contributing cells and normalized. nullopt when nothing
/// contributes or the sum cancels.
template <typename Scalar>
std::optional<Eigen::VectorXd> render_language(const VoxelField<Scalar>& field, const RaySampleBatch& batch,
                                               std::span<const double> weights, double rendered_depth,
                                               double half_width);

/// Mean squared depth error over pixels with gt depth > 0 and mean squared color error
/// (squared norm over the three channels) over all pixels. Throws InputError on M = 0.
LossReport compute_losses(std::span<const double> pred_depth, std::span<const double> gt_depth,
                          std::span<const Eigen::Vector3d> pred_rgb, std::span<const Eigen::Vector3d> gt_rgb,
                          double lambda_c);

/// A supervised pixel ray.
struct TrainRay {
  Ray ray;
  double depth = 0;
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
};

/// Gradients of the total loss. Feature gradients are dense over field slots; only the
/// slots listed in `touched` are nonzero.
template <typename Scalar>
struct Gradients {
  MlpParams<Scalar> occupancy;
  MlpParams<Scalar> color;
  std::vector<Scalar> geo;
  std::vector<Scalar> color_features;
  std::vector<std::int32_t> touched;
};

/// Renders `rays` with fixed `samples` (one batch per ray), evaluates the loss and,
/// when `grads` is non-null, its exact gradient with respect to both decoders and every
/// touched feature cell. Missing cells along the rays are created.
template <typename Scalar>
LossReport loss_and_gradients(VoxelField<Scalar>& field, const Decoders<Scalar>& decoders,
                              std::span<const TrainRay> rays, std::span<const RaySampleBatch> samples,
                              double lambda_c, Gradients<Scalar>* grads);

/// Inference-time rendering configuration.
struct RenderSettings {
  SamplingConfig coarse;
  SamplingConfig fine;
  bool color = true;
  bool language = false;
  double language_half_width = 0.64;
};

RenderSettings render_settings(const Config& config);
SamplingConfig training_sampling(const Config& config);

/// Two-pass render: a coarse stratified pass finds the median termination depth, a second pass adds surface
/// samples around that estimate. Deterministic. The second-pass samples are moved into
/// `fine_samples` when given.
template <typename Scalar>
std::vector<RenderOutput> render_rays(const VoxelField<Scalar>& field, const Decoders<Scalar>& decoders,
                                      std::span<const Ray> rays, const RenderSettings& settings,
                                      std::vector<RaySampleBatch>* fine_samples = nullptr);

/// Single-pass render of rays with caller-provided samples.
template <typename Scalar>
std::vector<RenderOutput> render_samples(const VoxelField<Scalar>& field, const Decoders<Scalar>& decoders,
                                         std::span<const RaySampleBatch> samples, bool color);

}  // namespace o2v
