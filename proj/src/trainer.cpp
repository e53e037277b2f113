// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/trainer.hpp"

#include <cmath>

namespace o2v {

template <typename Scalar>
void Optimizer<Scalar>::update_mlp(Mlp<Scalar>& mlp, const MlpParams<Scalar>& g, Moments& mom) {
  auto& p = mlp.params();
  const auto lr = static_cast<Scalar>(settings_.lr_mlp);
  if (settings_.kind == OptimizerKind::kSgd) {
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
      p.weights[l] -= lr * g.weights[l];
      p.biases[l] -= lr * g.biases[l];
    }
    return;
  }
  if (mom.m.weights.empty()) {
    mom.m = p.zeros_like();
    mom.v = p.zeros_like();
  }
  const auto b1 = static_cast<Scalar>(settings_.beta1);
  const auto b2 = static_cast<Scalar>(settings_.beta2);
  const auto eps = static_cast<Scalar>(settings_.epsilon);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(settings_.beta1, static_cast<double>(step_)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(settings_.beta2, static_cast<double>(step_)));
  auto adam = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.cwiseAbs2();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    adam(p.weights[l], g.weights[l], mom.m.weights[l], mom.v.weights[l]);
    adam(p.biases[l], g.biases[l], mom.m.biases[l], mom.v.biases[l]);
  }
}

template <typename Scalar>
void Optimizer<Scalar>::apply(VoxelField<Scalar>& field, Decoders<Scalar>& decoders, const Gradients<Scalar>& grads) {
  ++step_;
  update_mlp(decoders.occupancy, grads.occupancy, occ_);
  update_mlp(decoders.color, grads.color, col_);

  const std::size_t dg = static_cast<std::size_t>(field.dims().geo);
  const std::size_t dc = static_cast<std::size_t>(field.dims().color);
  const auto lr = static_cast<Scalar>(settings_.lr_features);
  const bool adam = settings_.kind == OptimizerKind::kAdam;
  if (adam) {
    const std::size_t slots = field.slot_capacity();
    geo_m_.resize(slots * dg, Scalar(0));
    geo_v_.resize(slots * dg, Scalar(0));
    col_m_.resize(slots * dc, Scalar(0));
    col_v_.resize(slots * dc, Scalar(0));
  }
  const auto b1 = static_cast<Scalar>(settings_.beta1);
  const auto b2 = static_cast<Scalar>(settings_.beta2);
  const auto eps = static_cast<Scalar>(settings_.epsilon);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(settings_.beta1, static_cast<double>(step_)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(settings_.beta2, static_cast<double>(step_)));

  auto update = [&](Scalar* param, const Scalar* g, Scalar* m, Scalar* v, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!adam) {
        param[j] -= lr * g[j];
        continue;
      }
      m[j] = b1 * m[j] + (Scalar(1) - b1) * g[j];
      v[j] = b2 * v[j] + (Scalar(1) - b2) * g[j] * g[j];
      param[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
    }
  };
  for (const std::int32_t slot : grads.touched) {
    const auto s = static_cast<std::size_t>(slot);
    update(field.geo(slot).data(), grads.geo.data() + s * dg, adam ? geo_m_.data() + s * dg : nullptr,
           adam ? geo_v_.data() + s * dg : nullptr, dg);
    update(field.color(slot).data(), grads.color_features.data() + s * dc, adam ? col_m_.data() + s * dc : nullptr,
           adam ? col_v_.data() + s * dc : nullptr, dc);
  }
}

TrainRay make_train_ray(const RGBDFrame& frame, int u, int v) {
  TrainRay r;
  r.ray = pixel_to_ray(frame, u, v);
  const auto idx = static_cast<Eigen::Index>(frame.index(u, v));
  r.depth = frame.depth[idx];
  r.rgb = frame.rgb.row(idx).transpose().cast<double>();
  return r;
}

std::vector<std::uint32_t> valid_pixels(const RGBDFrame& frame) {
  std::vector<std::uint32_t> out;
  for (Eigen::Index i = 0; i < frame.depth.size(); ++i) {
    if (frame.depth[i] > 0) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

template <typename Scalar>
LossReport train_step(VoxelField<Scalar>& field, Decoders<Scalar>& decoders, Optimizer<Scalar>& optimizer,
                      std::span<const TrainRay> rays, const SamplingConfig& sampling, double lambda_c, Rng& rng) {
  std::vector<RaySampleBatch> samples(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    samples[r] = sample_ray(rays[r].ray, field.bounds(), sampling, rays[r].depth, &rng);
  }
  Gradients<Scalar> grads;
  const LossReport report =
      loss_and_gradients(field, decoders, rays, std::span<const RaySampleBatch>(samples), lambda_c, &grads);
  if (!std::isfinite(report.total())) throw NumericError("train_step: non-finite loss");
  optimizer.apply(field, decoders, grads);
  return report;
}

template <typename Scalar>
LossReport train_step(VoxelField<Scalar>& field, Decoders<Scalar>& decoders, Optimizer<Scalar>& optimizer,
                      const RGBDFrame& frame, int m, const SamplingConfig& sampling, double lambda_c, Rng& rng) {
  const auto pixels = valid_pixels(frame);
  if (pixels.empty() || m <= 0) throw InputError("train_step: frame has no valid-depth pixels");
  std::uniform_int_distribution<std::size_t> pick(0, pixels.size() - 1);
  std::vector<TrainRay> rays;
  rays.reserve(static_cast<std::size_t>(m));
  const int w = frame.intrinsics.width;
  for (int i = 0; i < m; ++i) {
    const std::uint32_t idx = pixels[pick(rng)];
    rays.push_back(make_train_ray(frame, static_cast<int>(idx % static_cast<std::uint32_t>(w)),
                                  static_cast<int>(idx / static_cast<std::uint32_t>(w))));
  }
  return train_step(field, decoders, optimizer, std::span<const TrainRay>(rays), sampling, lambda_c, rng);
}

OptimizerSettings optimizer_settings(const Config& config) {
  OptimizerSettings s;
  s.kind = config.optimizer;
  s.lr_features = config.lr_feat;
  s.lr_mlp = config.lr_mlp;
  return s;
}

template class Optimizer<float>;
template class Optimizer<double>;
template LossReport train_step(VoxelField<float>&, Decoders<float>&, Optimizer<float>&, std::span<const TrainRay>,
                               const SamplingConfig&, double, Rng&);
template LossReport train_step(VoxelField<double>&, Decoders<double>&, Optimizer<double>&, std::span<const TrainRay>,
                               const SamplingConfig&, double, Rng&);
template LossReport train_step(VoxelField<float>&, Decoders<float>&, Optimizer<float>&, const RGBDFrame&, int,
                               const SamplingConfig&, double, Rng&);
template LossReport train_step(VoxelField<double>&, Decoders<double>&, Optimizer<double>&, const RGBDFrame&, int,
                               const SamplingConfig&, double, Rng&);

}  // namespace o2v
