// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/mapper.hpp"

#include <chrono>

namespace o2v {

void SnapshotPublisher::publish(std::shared_ptr<const MapSnapshot> snapshot) {
  std::lock_guard lock(mutex_);
  current_ = std::move(snapshot);
}

std::shared_ptr<const MapSnapshot> SnapshotPublisher::latest() const {
  std::lock_guard lock(mutex_);
  return current_;
}

Mapper::Mapper(const Config& config, const SceneBounds& bounds, const CameraIntrinsics& intrinsics,
               std::shared_ptr<const PerceptionProvider> provider, MapperOptions options)
    : Mapper(make_empty_snapshot(config, bounds, intrinsics, provider->embedding_dim()), provider, options) {}

Mapper::Mapper(MapSnapshot initial, std::shared_ptr<const PerceptionProvider> provider, MapperOptions options)
    : state_(std::move(initial)),
      provider_(std::move(provider)),
      options_(options),
      optimizer_(optimizer_settings(state_.config)),
      rng_(state_.config.seed ^ 0x5851f42d4c957f2dULL) {
  if (provider_ == nullptr) throw InputError("Mapper: provider required");
  if (provider_->embedding_dim() != state_.field.dims().language) {
    throw InputError("Mapper: provider embedding dim differs from the map");
  }
  if (options_.publish) publish();
}

void Mapper::publish() {
  auto copy = std::make_shared<MapSnapshot>(state_);
  copy->digest = snapshot_digest(*copy);
  publisher_.publish(std::move(copy));
}

LossReport Mapper::train_on(std::size_t newest) {
  const Config& cfg = state_.config;
  const SamplingConfig sampling = training_sampling(cfg);
  const int m = cfg.m_pixels;
  const int current = std::clamp(static_cast<int>(std::lround(cfg.current_frame_share * m)), 0, m);
  std::uniform_int_distribution<std::size_t> any_frame(0, history_.size() - 1);
  LossReport last;
  std::vector<TrainRay> rays;
  rays.reserve(static_cast<std::size_t>(m));
  for (int step = 0; step < cfg.steps_per_frame && !stop_requested(); ++step) {
    rays.clear();
    for (int i = 0; i < m; ++i) {
      const std::size_t f = i < current ? newest : any_frame(rng_);
      const auto& pixels = valid_[f];
      if (pixels.empty()) continue;
      const std::uint32_t idx = pixels[std::uniform_int_distribution<std::size_t>(0, pixels.size() - 1)(rng_)];
      const auto w = static_cast<std::uint32_t>(history_[f].intrinsics.width);
      rays.push_back(make_train_ray(history_[f], static_cast<int>(idx % w), static_cast<int>(idx / w)));
    }
    if (rays.empty()) break;
    last = train_step(state_.field, state_.decoders, optimizer_, std::span<const TrainRay>(rays), sampling, cfg.lambda_c,
               rng_);
  }
  return last;
}

FrameStats Mapper::process(const RGBDFrame& frame) {
  const auto t0 = std::chrono::steady_clock::now();
  frame.validate(state_.config.max_range);
  FrameStats stats;
  stats.frame_id = frame.frame_id;

  const FramePerception perception = provider_->perceive(frame);
  const FusionSettings fusion = fusion_settings(state_.config);
  stats.integration = integrate_frame(state_.field, frame, perception, fusion);
  for (const MaskSummary& s : stats.integration.masks) {
    if (s.points == 0) continue;
    const InstanceMask& mask = perception.masks[s.mask];
    const double k = mask.confidence * fusion.scale_weights[std::min<std::size_t>(mask.scale_rank, kScaleRanks - 1)];
    if (!(k > 0)) continue;
    Eigen::VectorXd f = mask.embedding.cast<double>();
    f /= f.norm();
    state_.retrieval.register_instance(f, s.centroid, k, s.voxels);
    ++stats.registrations;
  }

  if (options_.train) {
    history_.push_back(frame);
    valid_.push_back(valid_pixels(frame));
    if (options_.history > 0 && history_.size() > options_.history) {
      history_.erase(history_.begin());
      valid_.erase(valid_.begin());
    }
    if (!valid_.back().empty()) {
      stats.last_loss = train_on(history_.size() - 1);
    }
  }

  state_.frames.push_back(FrameRecord{frame.frame_id, frame.pose});
  ++state_.frame_counter;
  stats.frame_counter = state_.frame_counter;
  if (options_.publish) publish();
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return stats;
}

}  // namespace o2v
