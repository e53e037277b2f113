// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Sparse hash-indexed voxel grid. Every cell may carry a geometry feature, a color
// feature and a language cell. Base cells can be split once into eight half-edge children.

#pragma once

#include <absl/container/flat_hash_map.h>

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "o2v/camera.hpp"

namespace o2v {

class BoundsError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct VoxelKey {
  std::int32_t ix = 0, iy = 0, iz = 0;
  std::uint8_t level = 0;  ///< 0 = base cell, 1 = child of a split base cell

  friend bool operator==(const VoxelKey&, const VoxelKey&) = default;
  friend auto operator<=>(const VoxelKey& a, const VoxelKey& b) {
    if (a.level != b.level) return a.level <=> b.level;
    if (a.iz != b.iz) return a.iz <=> b.iz;
    if (a.iy != b.iy) return a.iy <=> b.iy;
    return a.ix <=> b.ix;
  }
  template <typename H>
  friend H AbslHashValue(H h, const VoxelKey& k) {
    return H::combine(std::move(h), k.ix, k.iy, k.iz, k.level);
  }

  [[nodiscard]] VoxelKey parent() const;
  [[nodiscard]] Eigen::Vector3i index() const { return {ix, iy, iz}; }
};

struct FieldDims {
  int geo = 16;
  int color = 16;
  int language = 32;

  friend bool operator==(const FieldDims&, const FieldDims&) = default;
};

/// One multi-view observation held in a language queue.
struct ObservationRecord {
  Eigen::VectorXd embedding;  ///< unit length
  double confidence = 0;
  double weight = 0;
};

/// Per-voxel language state: a bounded queue of observations plus the voted feature
/// `fused` (k-weighted mean of every integrated embedding) and its total weight.
struct LanguageCell {
  std::vector<ObservationRecord> queue;
  Eigen::VectorXd fused;
  double accumulated = 0;

  [[nodiscard]] bool empty() const { return accumulated <= 0 || queue.empty(); }
};

template <typename Scalar>
class VoxelField {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using FeatureMap = Eigen::Map<Vector>;
  using ConstFeatureMap = Eigen::Map<const Vector>;

  /// One of the eight trilinear neighbors of a point, resolved to the cell that stores
  /// its features. `slot` is -1 for a cell that has not been created yet.
  struct Corner {
    VoxelKey key;
    std::int32_t slot = -1;
    Scalar weight = 0;
  };
  using Corners = std::array<Corner, 8>;

  struct Cell {
    std::int32_t slot = -1;      ///< feature storage slot, -1 if none
    std::int32_t language = -1;  ///< index into language storage, -1 if none
    bool split = false;
  };

  VoxelField(const SceneBounds& bounds, double base_edge, FieldDims dims, int queue_capacity = 8);

  [[nodiscard]] const SceneBounds& bounds() const { return bounds_; }
  [[nodiscard]] const FieldDims& dims() const { return dims_; }
  [[nodiscard]] double base_edge() const { return base_edge_; }
  [[nodiscard]] double edge(int level) const { return level == 0 ? base_edge_ : 0.5 * base_edge_; }
  [[nodiscard]] int queue_capacity() const { return queue_capacity_; }

  /// Finest key containing `p`; throws BoundsError outside the scene bounds.
  [[nodiscard]] VoxelKey cell_at(const Vec3& p) const;
  [[nodiscard]] Vec3 center(const VoxelKey& key) const;
  [[nodiscard]] bool is_split(const VoxelKey& base) const;

  /// Splits a base cell into eight children that copy its features and start with
  /// empty language cells. Throws StateError on a child key or an already split cell.
  std::array<VoxelKey, 8> split_voxel(const VoxelKey& key);

  /// Trilinear neighbors at the finest level containing `p`. Missing cells keep slot -1.
  [[nodiscard]] Corners corners(const Vec3& p) const;
  /// Same as corners() but creates any missing cell with zero features.
  Corners touch(const Vec3& p);

  [[nodiscard]] ConstFeatureMap geo(std::int32_t slot) const {
    return ConstFeatureMap(geo_.data() + static_cast<std::size_t>(slot) * dims_.geo, dims_.geo);
  }
  FeatureMap geo(std::int32_t slot) {
    return FeatureMap(geo_.data() + static_cast<std::size_t>(slot) * dims_.geo, dims_.geo);
  }
  [[nodiscard]] ConstFeatureMap color(std::int32_t slot) const {
    return ConstFeatureMap(color_.data() + static_cast<std::size_t>(slot) * dims_.color, dims_.color);
  }
  FeatureMap color(std::int32_t slot) {
    return FeatureMap(color_.data() + static_cast<std::size_t>(slot) * dims_.color, dims_.color);
  }

  /// Storage slot of the cell at exactly `key`, or -1.
  [[nodiscard]] std::int32_t slot_of(const VoxelKey& key) const;
  /// Creates the feature cell at exactly `key` if missing and returns its slot.
  std::int32_t ensure_slot(const VoxelKey& key);
  [[nodiscard]] std::size_t slot_capacity() const { return geo_.size() / static_cast<std::size_t>(dims_.geo); }

  [[nodiscard]] const LanguageCell* language(const VoxelKey& key) const;
  LanguageCell& language_mut(const VoxelKey& key);
  /// Language cell of the finest cell containing `p` (nullptr when out of bounds or absent).
  [[nodiscard]] const LanguageCell* language_at(const Vec3& p) const;

  [[nodiscard]] const absl::flat_hash_map<VoxelKey, Cell>& cells() const { return cells_; }
  [[nodiscard]] std::size_t feature_cell_count() const;
  [[nodiscard]] std::size_t language_cell_count() const;
  [[nodiscard]] std::size_t split_count() const;
  [[nodiscard]] const std::vector<LanguageCell>& language_cells() const { return language_; }

  /// Clears every language cell, keeping geometry and split structure.
  void clear_language();

  /// Sorted keys of all cells, for deterministic iteration.
  [[nodiscard]] std::vector<VoxelKey> sorted_keys() const;

  /// Raw cell insertion used by deserialization.
  void restore_cell(const VoxelKey& key, bool split, const Scalar* geo, const Scalar* color,
                    const LanguageCell* language);

 private:
  [[nodiscard]] VoxelKey storage_key(const VoxelKey& key, const Vec3& p) const;
  std::int32_t allocate_slot();
  template <bool kCreate>
  Corners corners_impl(const Vec3& p, VoxelField* mut) const;

  SceneBounds bounds_;
  double base_edge_;
  FieldDims dims_;
  int queue_capacity_;
  absl::flat_hash_map<VoxelKey, Cell> cells_;
  std::vector<Scalar> geo_;
  std::vector<Scalar> color_;
  std::vector<LanguageCell> language_;
};

/// Interpolated (geometry, color) features at `p`; missing cells contribute zeros.
template <typename Scalar>
std::pair<typename VoxelField<Scalar>::Vector, typename VoxelField<Scalar>::Vector> interpolate_features(
    const VoxelField<Scalar>& field, const Vec3& p);

/// The eight (storage key, weight) pairs through which gradients reach cells.
template <typename Scalar>
std::array<std::pair<VoxelKey, double>, 8> interpolation_gradient(const VoxelField<Scalar>& field, const Vec3& p);

extern template class VoxelField<float>;
extern template class VoxelField<double>;

}  // namespace o2v
