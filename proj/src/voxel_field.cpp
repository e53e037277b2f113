// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/voxel_field.hpp"

#include <algorithm>
#include <cmath>

namespace o2v {
namespace {

std::int32_t floor_div2(std::int32_t a) { return a >= 0 ? a / 2 : -((-a + 1) / 2); }

std::int32_t floor_index(double x) { return static_cast<std::int32_t>(std::floor(x)); }

}  // namespace

VoxelKey VoxelKey::parent() const {
  if (level == 0) return *this;
  return {floor_div2(ix), floor_div2(iy), floor_div2(iz), 0};
}

template <typename Scalar>
VoxelField<Scalar>::VoxelField(const SceneBounds& bounds, double base_edge, FieldDims dims, int queue_capacity)
    : bounds_(bounds), base_edge_(base_edge), dims_(dims), queue_capacity_(queue_capacity) {
  bounds_.validate();
  if (!(base_edge > 0)) throw InputError("voxel field: edge must be positive");
  if (dims.geo <= 0 || dims.color <= 0 || dims.language <= 0) throw InputError("voxel field: dims must be positive");
  if (queue_capacity <= 0) throw InputError("voxel field: queue capacity must be positive");
}

template <typename Scalar>
VoxelKey VoxelField<Scalar>::cell_at(const Vec3& p) const {
  if (!bounds_.contains(p)) throw BoundsError("cell_at: point outside scene bounds");
  const Vec3 u = p / base_edge_;
  const VoxelKey base{floor_index(u.x()), floor_index(u.y()), floor_index(u.z()), 0};
  if (!is_split(base)) return base;
  // 2 * (p / e) keeps child and parent indexing consistent under rounding.
  return {floor_index(2.0 * u.x()), floor_index(2.0 * u.y()), floor_index(2.0 * u.z()), 1};
}

template <typename Scalar>
Vec3 VoxelField<Scalar>::center(const VoxelKey& key) const {
  return (key.index().cast<double>().array() + 0.5).matrix() * edge(key.level);
}

template <typename Scalar>
bool VoxelField<Scalar>::is_split(const VoxelKey& base) const {
  const auto it = cells_.find(base);
  return it != cells_.end() && it->second.split;
}

template <typename Scalar>
std::int32_t VoxelField<Scalar>::allocate_slot() {
  const auto slot = static_cast<std::int32_t>(slot_capacity());
  geo_.resize(geo_.size() + static_cast<std::size_t>(dims_.geo), Scalar(0));
  color_.resize(color_.size() + static_cast<std::size_t>(dims_.color), Scalar(0));
  return slot;
}

template <typename Scalar>
std::array<VoxelKey, 8> VoxelField<Scalar>::split_voxel(const VoxelKey& key) {
  if (key.level != 0) throw StateError("split_voxel: only base cells can be split");
  Cell& parent = cells_[key];
  if (parent.split) throw StateError("split_voxel: cell already split");
  parent.split = true;
  const std::int32_t parent_slot = parent.slot;
  parent.slot = -1;
  if (parent.language >= 0) {
    language_[static_cast<std::size_t>(parent.language)] = LanguageCell{};
    parent.language = -1;
  }

  std::array<VoxelKey, 8> children;
  for (int c = 0; c < 8; ++c) {
    const VoxelKey child{2 * key.ix + (c & 1), 2 * key.iy + ((c >> 1) & 1), 2 * key.iz + ((c >> 2) & 1), 1};
    children[static_cast<std::size_t>(c)] = child;
    std::int32_t slot = (c == 0 && parent_slot >= 0) ? parent_slot : allocate_slot();
    if (parent_slot >= 0 && slot != parent_slot) {
      geo(slot) = geo(parent_slot);
      color(slot) = color(parent_slot);
    }
    cells_[child] = Cell{slot, -1, false};
  }
  return children;
}

template <typename Scalar>
VoxelKey VoxelField<Scalar>::storage_key(const VoxelKey& key, const Vec3& p) const {
  if (key.level == 1) {
    const VoxelKey parent = key.parent();
    return is_split(parent) ? key : parent;
  }
  if (!is_split(key)) return key;
  // Split base neighbor: use the child octant closest to p.
  VoxelKey child{0, 0, 0, 1};
  const Eigen::Vector3i base = key.index();
  std::array<std::int32_t, 3> out{};
  for (int a = 0; a < 3; ++a) {
    const double lo = base[a] * base_edge_;
    const double x = std::clamp(p[a], lo, lo + base_edge_);
    const std::int32_t c = std::clamp(floor_index(2.0 * (x / base_edge_)), 2 * base[a], 2 * base[a] + 1);
    out[static_cast<std::size_t>(a)] = c;
  }
  child.ix = out[0];
  child.iy = out[1];
  child.iz = out[2];
  return child;
}

template <typename Scalar>
std::int32_t VoxelField<Scalar>::slot_of(const VoxelKey& key) const {
  const auto it = cells_.find(key);
  return it == cells_.end() ? -1 : it->second.slot;
}

template <typename Scalar>
std::int32_t VoxelField<Scalar>::ensure_slot(const VoxelKey& key) {
  Cell& cell = cells_[key];
  if (cell.split) throw StateError("ensure_slot: split cells hold no features");
  if (cell.slot < 0) cell.slot = allocate_slot();
  return cell.slot;
}

template <typename Scalar>
template <bool kCreate>
typename VoxelField<Scalar>::Corners VoxelField<Scalar>::corners_impl(const Vec3& p, VoxelField* mut) const {
  const Vec3 scaled = p / base_edge_;
  const VoxelKey base{floor_index(scaled.x()), floor_index(scaled.y()), floor_index(scaled.z()), 0};
  const std::uint8_t level = is_split(base) ? 1 : 0;
  const Vec3 u = (level == 1 ? Vec3(2.0 * scaled) : scaled).array() - 0.5;
  const Eigen::Vector3i i0(floor_index(u.x()), floor_index(u.y()), floor_index(u.z()));
  const Vec3 t = u - i0.cast<double>();

  Corners out;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const VoxelKey key{i0.x() + dx, i0.y() + dy, i0.z() + dz, level};
    const double w = (dx ? t.x() : 1.0 - t.x()) * (dy ? t.y() : 1.0 - t.y()) * (dz ? t.z() : 1.0 - t.z());
    Corner& corner = out[static_cast<std::size_t>(c)];
    corner.key = storage_key(key, p);
    corner.weight = static_cast<Scalar>(w);
    if constexpr (kCreate) {
      corner.slot = mut->ensure_slot(corner.key);
    } else {
      corner.slot = slot_of(corner.key);
    }
  }
  return out;
}

template <typename Scalar>
typename VoxelField<Scalar>::Corners VoxelField<Scalar>::corners(const Vec3& p) const {
  return corners_impl<false>(p, nullptr);
}

template <typename Scalar>
typename VoxelField<Scalar>::Corners VoxelField<Scalar>::touch(const Vec3& p) {
  return corners_impl<true>(p, this);
}

template <typename Scalar>
const LanguageCell* VoxelField<Scalar>::language(const VoxelKey& key) const {
  const auto it = cells_.find(key);
  if (it == cells_.end() || it->second.language < 0) return nullptr;
  return &language_[static_cast<std::size_t>(it->second.language)];
}

template <typename Scalar>
LanguageCell& VoxelField<Scalar>::language_mut(const VoxelKey& key) {
  if (key.level == 1 && !is_split(key.parent())) throw StateError("language_mut: child of an unsplit cell");
  Cell& cell = cells_[key];
  if (cell.split) throw StateError("language_mut: split cells hold no language");
  if (cell.language < 0) {
    cell.language = static_cast<std::int32_t>(language_.size());
    LanguageCell fresh;
    fresh.fused = Eigen::VectorXd::Zero(dims_.language);
    language_.push_back(std::move(fresh));
  }
  return language_[static_cast<std::size_t>(cell.language)];
}

template <typename Scalar>
const LanguageCell* VoxelField<Scalar>::language_at(const Vec3& p) const {
  if (!bounds_.contains(p)) return nullptr;
  return language(cell_at(p));
}

template <typename Scalar>
std::size_t VoxelField<Scalar>::feature_cell_count() const {
  return static_cast<std::size_t>(
      std::count_if(cells_.begin(), cells_.end(), [](const auto& kv) { return kv.second.slot >= 0; }));
}

template <typename Scalar>
std::size_t VoxelField<Scalar>::language_cell_count() const {
  return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [this](const auto& kv) {
    return kv.second.language >= 0 && !language_[static_cast<std::size_t>(kv.second.language)].empty();
  }));
}

template <typename Scalar>
std::size_t VoxelField<Scalar>::split_count() const {
  return static_cast<std::size_t>(
      std::count_if(cells_.begin(), cells_.end(), [](const auto& kv) { return kv.second.split; }));
}

template <typename Scalar>
void VoxelField<Scalar>::clear_language() {
  for (auto& [key, cell] : cells_) cell.language = -1;
  language_.clear();
}

template <typename Scalar>
std::vector<VoxelKey> VoxelField<Scalar>::sorted_keys() const {
  std::vector<VoxelKey> keys;
  keys.reserve(cells_.size());
  for (const auto& kv : cells_) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());
  return keys;
}

template <typename Scalar>
void VoxelField<Scalar>::restore_cell(const VoxelKey& key, bool split, const Scalar* geo_src,
                                      const Scalar* color_src, const LanguageCell* lang) {
  Cell& cell = cells_[key];
  cell.split = split;
  if (geo_src != nullptr) {
    cell.slot = allocate_slot();
    std::copy_n(geo_src, dims_.geo, geo_.data() + static_cast<std::size_t>(cell.slot) * dims_.geo);
    std::copy_n(color_src, dims_.color, color_.data() + static_cast<std::size_t>(cell.slot) * dims_.color);
  }
  if (lang != nullptr) {
    cell.language = static_cast<std::int32_t>(language_.size());
    language_.push_back(*lang);
  }
}

template <typename Scalar>
std::pair<typename VoxelField<Scalar>::Vector, typename VoxelField<Scalar>::Vector> interpolate_features(
    const VoxelField<Scalar>& field, const Vec3& p) {
  using Vector = typename VoxelField<Scalar>::Vector;
  Vector geo = Vector::Zero(field.dims().geo);
  Vector color = Vector::Zero(field.dims().color);
  for (const auto& corner : field.corners(p)) {
    if (corner.slot < 0) continue;
    geo.noalias() += corner.weight * field.geo(corner.slot);
    color.noalias() += corner.weight * field.color(corner.slot);
  }
  return {geo, color};
}

template <typename Scalar>
std::array<std::pair<VoxelKey, double>, 8> interpolation_gradient(const VoxelField<Scalar>& field, const Vec3& p) {
  std::array<std::pair<VoxelKey, double>, 8> out;
  const auto corners = field.corners(p);
  for (std::size_t i = 0; i < 8; ++i) out[i] = {corners[i].key, static_cast<double>(corners[i].weight)};
  return out;
}

template class VoxelField<float>;
template class VoxelField<double>;
template std::pair<VoxelField<float>::Vector, VoxelField<float>::Vector> interpolate_features(
    const VoxelField<float>&, const Vec3&);
template std::pair<VoxelField<double>::Vector, VoxelField<double>::Vector> interpolate_features(
    const VoxelField<double>&, const Vec3&);
template std::array<std::pair<VoxelKey, double>, 8> interpolation_gradient(const VoxelField<float>&, const Vec3&);
template std::array<std::pair<VoxelKey, double>, 8> interpolation_gradient(const VoxelField<double>&, const Vec3&);

}  // namespace o2v
