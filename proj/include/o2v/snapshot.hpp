// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Immutable map state shared with readers, and its "O2VM" file format.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "o2v/binary_io.hpp"
#include "o2v/camera.hpp"
#include "o2v/config.hpp"
#include "o2v/decoder.hpp"
#include "o2v/retrieval_map.hpp"
#include "o2v/voxel_field.hpp"

namespace o2v {

inline constexpr std::uint32_t kMapVersion = 1;

struct FrameRecord {
  std::uint64_t frame_id = 0;
  Pose pose;
};

struct MapSnapshot {
  Config config;
  VoxelField<float> field;
  Decoders<float> decoders;
  RetrievalMap retrieval;
  CameraIntrinsics intrinsics;
  std::vector<FrameRecord> frames;  ///< integrated frames in stream order
  std::uint64_t frame_counter = 0;
  std::uint64_t digest = 0;  ///< content hash fixed at publication, see snapshot_digest

  /// Pose of a frame by id; throws LookupError-like std::out_of_range when absent.
  [[nodiscard]] const Pose& frame_pose(std::uint64_t frame_id) const;
};

/// Fresh, untrained snapshot for `bounds` and `config`.
MapSnapshot make_empty_snapshot(const Config& config, const SceneBounds& bounds, const CameraIntrinsics& intrinsics,
                                int language_dim);

/// Serialized content without the trailing digest section.
std::vector<std::uint8_t> serialize_content(const MapSnapshot& snapshot);
/// FNV-1a of serialize_content.
std::uint64_t snapshot_digest(const MapSnapshot& snapshot);

/// Full file image: content followed by a digest section.
std::vector<std::uint8_t> serialize_map(const MapSnapshot& snapshot);
/// Throws FormatError on bad magic, truncation, bad sections or digest mismatch, and
/// VersionError on an unsupported version.
MapSnapshot parse_map(std::span<const std::uint8_t> bytes);

void save_map(const std::filesystem::path& path, const MapSnapshot& snapshot);
MapSnapshot load_map(const std::filesystem::path& path);

}  // namespace o2v
