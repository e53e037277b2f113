// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Per-frame instance masks with language embeddings: the provider interface, the
// deterministic synthetic stub, and the O2VP / O2VT archive formats.

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "o2v/binary_io.hpp"
#include "o2v/camera.hpp"
#include "o2v/synth_world.hpp"

namespace o2v {

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

inline constexpr int kStubEmbeddingDim = 32;
inline constexpr int kScaleRanks = 3;

struct InstanceMask {
  std::vector<std::uint8_t> bitmap;  ///< row-major, one byte per pixel, 0 or 1
  float confidence = 1.0f;
  Eigen::VectorXf embedding;  ///< unit length
  std::uint8_t scale_rank = 0;

  [[nodiscard]] std::size_t area() const;
  friend bool operator==(const InstanceMask&, const InstanceMask&) = default;
};

struct FramePerception {
  std::uint64_t frame_id = 0;
  int embedding_dim = kStubEmbeddingDim;
  std::vector<InstanceMask> masks;

  /// Throws FormatError on a broken invariant: empty bitmap, wrong bitmap size, non-unit
  /// embedding, confidence outside [0,1], rank > 2, or two same-rank masks sharing a pixel.
  void validate(std::size_t pixel_count) const;
  friend bool operator==(const FramePerception&, const FramePerception&) = default;
};

/// Source of per-frame masks and of query-text embeddings in the same space.
class PerceptionProvider {
 public:
  virtual ~PerceptionProvider() = default;
  [[nodiscard]] virtual FramePerception perceive(const RGBDFrame& frame) const = 0;
  [[nodiscard]] virtual Eigen::VectorXd embed_text(const std::string& text) const = 0;
  [[nodiscard]] virtual int embedding_dim() const = 0;
};

/// Deterministic unit vector for `label`: a counter-based generator seeded with the
/// label's FNV-1a hash feeds Box-Muller normals.
Eigen::VectorXd stub_embed(const std::string& label, int dim = kStubEmbeddingDim);

struct StubOptions {
  int embedding_dim = kStubEmbeddingDim;
  bool structure_masks = true;  ///< also emit floor / ceiling / wall masks
  int min_pixels = 1;
};

/// Masks from the ground-truth instance map of a synthetic scene. Object confidence is
/// the visible fraction of the object's unoccluded projection, clamped to [0.05, 1].
class StubProvider final : public PerceptionProvider {
 public:
  explicit StubProvider(SynthScene scene, StubOptions options = {});
  [[nodiscard]] FramePerception perceive(const RGBDFrame& frame) const override;
  [[nodiscard]] Eigen::VectorXd embed_text(const std::string& text) const override;
  [[nodiscard]] int embedding_dim() const override { return options_.embedding_dim; }
  [[nodiscard]] const SynthScene& scene() const { return scene_; }

 private:
  SynthScene scene_;
  StubOptions options_;
};

/// In-memory contents of an O2VP archive.
struct PerceptionArchive {
  int embedding_dim = kStubEmbeddingDim;
  std::vector<FramePerception> frames;
  friend bool operator==(const PerceptionArchive&, const PerceptionArchive&) = default;
};

/// Text embeddings of an O2VT sidecar.
struct TextEmbeddingTable {
  int embedding_dim = kStubEmbeddingDim;
  std::map<std::string, Eigen::VectorXf> entries;
  bool operator==(const TextEmbeddingTable& other) const;
};

std::vector<std::uint8_t> encode_rle(std::span<const std::uint8_t> bitmap);
/// Inverse of encode_rle. Throws FormatError when the runs do not cover `pixel_count`.
std::vector<std::uint8_t> decode_rle(ByteReader& reader, std::size_t pixel_count);

std::vector<std::uint8_t> serialize_archive(const PerceptionArchive& archive);
/// Parses an archive. Bitmaps must cover `pixel_count` pixels; with nullopt the count is
/// taken from the first mask and every other mask must agree.
PerceptionArchive parse_archive(std::span<const std::uint8_t> bytes, std::optional<std::size_t> pixel_count = {});
void write_archive(const std::filesystem::path& path, const PerceptionArchive& archive);
PerceptionArchive read_archive(const std::filesystem::path& path, std::optional<std::size_t> pixel_count = {});

std::vector<std::uint8_t> serialize_text_table(const TextEmbeddingTable& table);
TextEmbeddingTable parse_text_table(std::span<const std::uint8_t> bytes);
void write_text_table(const std::filesystem::path& path, const TextEmbeddingTable& table);
TextEmbeddingTable read_text_table(const std::filesystem::path& path);

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> errors;
  std::size_t frames = 0;
  std::size_t masks = 0;
};

/// Full structural check of an O2VP archive, including every mask invariant. Never throws
/// on malformed input; problems are listed in the report.
ValidationReport validate_archive(std::span<const std::uint8_t> bytes, std::optional<std::size_t> pixel_count = {});
ValidationReport validate_text_table(std::span<const std::uint8_t> bytes);

/// Replays precomputed perception keyed by frame id.
class ArchiveProvider final : public PerceptionProvider {
 public:
  explicit ArchiveProvider(PerceptionArchive archive, std::optional<TextEmbeddingTable> text = {});
  /// Throws LookupError for frame ids absent from the archive.
  [[nodiscard]] FramePerception perceive(const RGBDFrame& frame) const override;
  /// Throws LookupError when the sidecar is missing or lacks `text`.
  [[nodiscard]] Eigen::VectorXd embed_text(const std::string& text) const override;
  [[nodiscard]] int embedding_dim() const override { return archive_.embedding_dim; }

 private:
  PerceptionArchive archive_;
  std::map<std::uint64_t, std::size_t> index_;
  std::optional<TextEmbeddingTable> text_;
};

/// Wraps a provider and corrupts the listed frames: every mask takes the embedding of the
/// next mask in the frame (a single mask is negated) and its confidence is replaced.
class CorruptingProvider final : public PerceptionProvider {
 public:
  CorruptingProvider(std::shared_ptr<const PerceptionProvider> inner, std::set<std::uint64_t> frame_ids,
                     float confidence = 0.1f);
  [[nodiscard]] FramePerception perceive(const RGBDFrame& frame) const override;
  [[nodiscard]] Eigen::VectorXd embed_text(const std::string& text) const override { return inner_->embed_text(text); }
  [[nodiscard]] int embedding_dim() const override { return inner_->embedding_dim(); }

 private:
  std::shared_ptr<const PerceptionProvider> inner_;
  std::set<std::uint64_t> frame_ids_;
  float confidence_;
};

/// Applies the corruption rule of CorruptingProvider to one perception in place.
void corrupt_perception(FramePerception& perception, float confidence);

}  // namespace o2v
