// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "o2v/config.hpp"
#include "o2v/decoder.hpp"
#include "o2v/renderer.hpp"
#include "o2v/voxel_field.hpp"

namespace o2v {

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr_features = 1e-1;
  double lr_mlp = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Gradient-descent state for decoder parameters (dense) and feature cells (sparse:
/// only cells touched by a step move, Adam moments are kept per slot).
template <typename Scalar>
class Optimizer {
 public:
  explicit Optimizer(OptimizerSettings settings = {}) : settings_(settings) {}

  void apply(VoxelField<Scalar>& field, Decoders<Scalar>& decoders, const Gradients<Scalar>& grads);
  [[nodiscard]] const OptimizerSettings& settings() const { return settings_; }
  [[nodiscard]] long steps() const { return step_; }

 private:
  struct Moments {
    MlpParams<Scalar> m, v;
  };
  void update_mlp(Mlp<Scalar>& mlp, const MlpParams<Scalar>& g, Moments& mom);

  OptimizerSettings settings_;
  long step_ = 0;
  Moments occ_, col_;
  std::vector<Scalar> geo_m_, geo_v_, col_m_, col_v_;
};

/// One joint update of both decoders and the touched feature cells from `rays`.
/// Returns the pre-update losses.
template <typename Scalar>
LossReport train_step(VoxelField<Scalar>& field, Decoders<Scalar>& decoders, Optimizer<Scalar>& optimizer,
                      std::span<const TrainRay> rays, const SamplingConfig& sampling, double lambda_c, Rng& rng);

/// Draws `m` pixels uniformly among the valid-depth pixels of `frame` and runs train_step.
template <typename Scalar>
LossReport train_step(VoxelField<Scalar>& field, Decoders<Scalar>& decoders, Optimizer<Scalar>& optimizer,
                      const RGBDFrame& frame, int m, const SamplingConfig& sampling, double lambda_c, Rng& rng);

/// Supervised ray for one pixel.
TrainRay make_train_ray(const RGBDFrame& frame, int u, int v);

/// Flat indices of pixels with valid depth.
std::vector<std::uint32_t> valid_pixels(const RGBDFrame& frame);

OptimizerSettings optimizer_settings(const Config& config);

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace o2v
