// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// The online mapping loop: perceive, fuse language, index instances, train the field,
// publish an immutable snapshot.

#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <vector>

#include "o2v/language_fusion.hpp"
#include "o2v/perception.hpp"
#include "o2v/renderer.hpp"
#include "o2v/snapshot.hpp"
#include "o2v/trainer.hpp"

namespace o2v {

/// Latest published snapshot, swapped atomically for readers.
class SnapshotPublisher {
 public:
  void publish(std::shared_ptr<const MapSnapshot> snapshot);
  [[nodiscard]] std::shared_ptr<const MapSnapshot> latest() const;

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const MapSnapshot> current_;
};

struct FrameStats {
  std::uint64_t frame_id = 0;
  std::uint64_t frame_counter = 0;
  LossReport last_loss;  ///< pre-update loss of the frame's final training step
  IntegrationReport integration;
  std::size_t registrations = 0;
  double seconds = 0;
};

struct MapperOptions {
  bool train = true;
  bool publish = true;
  /// Frames kept in memory for replay batches; 0 keeps all.
  std::size_t history = 0;
};

class Mapper {
 public:
  Mapper(const Config& config, const SceneBounds& bounds, const CameraIntrinsics& intrinsics,
         std::shared_ptr<const PerceptionProvider> provider, MapperOptions options = {});
  /// Continues from an existing map (geometry, language and index are kept).
  Mapper(MapSnapshot initial, std::shared_ptr<const PerceptionProvider> provider, MapperOptions options = {});

  /// Runs the full per-frame pipeline and publishes a snapshot.
  FrameStats process(const RGBDFrame& frame);

  /// Working state (single-writer; not for concurrent readers).
  [[nodiscard]] const MapSnapshot& state() const { return state_; }
  MapSnapshot& state() { return state_; }
  [[nodiscard]] SnapshotPublisher& publisher() { return publisher_; }
  [[nodiscard]] std::shared_ptr<const MapSnapshot> latest() const { return publisher_.latest(); }
  /// Publishes the working state now.
  void publish();

  void request_stop() { stop_.store(true); }
  [[nodiscard]] bool stop_requested() const { return stop_.load(); }

 private:
  LossReport train_on(std::size_t newest);

  MapSnapshot state_;
  std::shared_ptr<const PerceptionProvider> provider_;
  MapperOptions options_;
  Optimizer<float> optimizer_;
  Rng rng_;
  std::vector<RGBDFrame> history_;
  std::vector<std::vector<std::uint32_t>> valid_;
  SnapshotPublisher publisher_;
  std::atomic<bool> stop_{false};
};

}  // namespace o2v
