// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "o2v/voxel_field.hpp"
#include "test_support.hpp"

namespace o2v {
namespace {

using Field = VoxelField<double>;

Field make_field(FieldDims dims = {2, 2, 4}) { return Field(SceneBounds{Vec3::Constant(-2), Vec3::Constant(2)}, 0.16, dims); }

TEST(CellAt, FloorIndexing) {
  Field f = make_field();
  EXPECT_EQ(f.cell_at({0.01, 0.01, 0.01}), (VoxelKey{0, 0, 0, 0}));
  EXPECT_EQ(f.cell_at({-0.01, 0, 0}).ix, -1);
  EXPECT_EQ(f.cell_at({0.33, 0.17, -0.17}), (VoxelKey{2, 1, -2, 0}));
  EXPECT_THROW((void)f.cell_at({3, 0, 0}), BoundsError);
}

TEST(CellAt, ChildAfterSplit) {
  Field f = make_field();
  f.split_voxel({0, 0, 0, 0});
  EXPECT_EQ(f.cell_at({0.01, 0.01, 0.01}), (VoxelKey{0, 0, 0, 1}));
  EXPECT_EQ(f.cell_at({0.15, 0.01, 0.09}), (VoxelKey{1, 0, 1, 1}));
  EXPECT_EQ(f.cell_at({0.17, 0.01, 0.01}), (VoxelKey{1, 0, 0, 0}));
}

TEST(CellAt, EveryPointInsideSplitParentMapsToChild) {
  Field f = make_field();
  const VoxelKey parent{-2, 3, 1, 0};
  f.split_voxel(parent);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 p = (parent.index().cast<double>() + Vec3(testing::uniform(rng, 0, 1), testing::uniform(rng, 0, 1),
                                                        testing::uniform(rng, 0, 1))) * 0.16;
    const VoxelKey k = f.cell_at(p);
    if (k.parent() != parent) continue;  // rounding on the far face
    EXPECT_EQ(k.level, 1);
    const Vec3 lo = k.index().cast<double>() * 0.08;
    EXPECT_TRUE((p.array() >= lo.array() - 1e-12).all() && (p.array() <= lo.array() + 0.08 + 1e-12).all());
  }
}

TEST(Split, ChildrenGeometryAndFeatures) {
  Field f = make_field();
  const VoxelKey parent{1, -1, 0, 0};
  const auto slot = f.ensure_slot(parent);
  f.geo(slot) << 0.25, -0.5;
  f.color(slot) << 1.0, 2.0;
  f.language_mut(parent).accumulated = 1;
  const auto children = f.split_voxel(parent);
  EXPECT_TRUE(f.is_split(parent));
  EXPECT_EQ(f.language(parent), nullptr);
  double volume = 0;
  std::set<VoxelKey> unique(children.begin(), children.end());
  EXPECT_EQ(unique.size(), 8u);
  for (const VoxelKey& c : children) {
    EXPECT_EQ(c.level, 1);
    EXPECT_EQ(c.parent(), parent);
    EXPECT_DOUBLE_EQ(f.edge(c.level), 0.08);
    volume += std::pow(f.edge(c.level), 3);
    const auto s = f.slot_of(c);
    ASSERT_GE(s, 0);
    EXPECT_EQ(f.geo(s), f.geo(f.slot_of(children[0])));
    EXPECT_EQ(f.color(s)[1], 2.0);
    EXPECT_NEAR((f.center(c) - f.center(parent)).cwiseAbs().maxCoeff(), 0.04, 1e-12);
  }
  EXPECT_NEAR(volume, std::pow(0.16, 3), 1e-15);
  EXPECT_THROW(f.split_voxel(parent), StateError);
  EXPECT_THROW(f.split_voxel(children[0]), StateError);
  EXPECT_EQ(f.split_count(), 1u);
}

TEST(Interpolation, CellCenterIdentity) {
  Field f = make_field();
  const VoxelKey k{2, 0, -1, 0};
  const auto corners = f.touch(f.center(k));
  (void)corners;
  f.geo(f.slot_of(k)) << 3, 4;
  const auto [geo, color] = interpolate_features(f, f.center(k));
  EXPECT_NEAR(geo[0], 3, 1e-12);
  EXPECT_NEAR(geo[1], 4, 1e-12);
  const auto weights = interpolation_gradient(f, f.center(k));
  for (const auto& [key, w] : weights) EXPECT_NEAR(w, key == k ? 1.0 : 0.0, 1e-12);
}

TEST(Interpolation, MidpointIsMean) {
  Field f = make_field();
  const VoxelKey a{0, 0, 0, 0}, b{1, 0, 0, 0};
  f.geo(f.ensure_slot(a)) << 1, 0;
  f.geo(f.ensure_slot(b)) << 3, 2;
  const Vec3 mid = 0.5 * (f.center(a) + f.center(b));
  EXPECT_NEAR(interpolate_features(f, mid).first[0], 2, 1e-12);
  EXPECT_NEAR(interpolate_features(f, mid).first[1], 1, 1e-12);
}

TEST(Interpolation, CubeMidpointWeightsAreEqual) {
  Field f = make_field();
  const Vec3 p = Vec3::Constant(0.16);
  for (const auto& [key, w] : interpolation_gradient(f, p)) EXPECT_NEAR(w, 0.125, 1e-12);
}

TEST(Interpolation, ConstantFieldAndWeightSumAndLinearity) {
  Field f = make_field();
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    const Vec3 p(testing::uniform(rng, -1.5, 1.5), testing::uniform(rng, -1.5, 1.5), testing::uniform(rng, -1.5, 1.5));
    for (const auto& c : f.touch(p)) {
      f.geo(c.slot) << 0.7, -0.2;
    }
    const auto w = interpolation_gradient(f, p);
    double sum = 0;
    for (const auto& kv : w) sum += kv.second;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_NEAR(interpolate_features(f, p).first[0], 0.7, 1e-12);
  }
  // random features: interpolation equals the weighted sum of stored features
  for (const auto& [key, cell] : f.cells()) {
    if (cell.slot >= 0) f.geo(cell.slot) = Eigen::Vector2d(testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1));
  }
  f.split_voxel({0, 0, 0, 0});
  for (int i = 0; i < 500; ++i) {
    const Vec3 p(testing::uniform(rng, -0.3, 0.3), testing::uniform(rng, -0.3, 0.3), testing::uniform(rng, -0.3, 0.3));
    Eigen::Vector2d expected = Eigen::Vector2d::Zero();
    for (const auto& [key, w] : interpolation_gradient(f, p)) {
      const auto s = f.slot_of(key);
      if (s >= 0) expected += w * f.geo(s);
    }
    EXPECT_NEAR((interpolate_features(f, p).first - expected).norm(), 0, 1e-12);
  }
}

TEST(Interpolation, MissingNeighboursReadAsZero) {
  Field f = make_field();
  const VoxelKey a{0, 0, 0, 0};
  f.geo(f.ensure_slot(a)) << 1, 1;
  const Vec3 p = f.center(a) + Vec3(0.08, 0, 0);
  EXPECT_NEAR(interpolate_features(f, p).first[0], 0.5, 1e-12);
  EXPECT_EQ(f.feature_cell_count(), 1u);
}

TEST(Language, ClearKeepsGeometry) {
  Field f = make_field();
  f.ensure_slot({0, 0, 0, 0});
  LanguageCell& c = f.language_mut({0, 0, 0, 0});
  c.queue.push_back({Eigen::Vector4d::UnitX(), 1, 1});
  c.fused = Eigen::Vector4d::UnitX();
  c.accumulated = 1;
  EXPECT_EQ(f.language_cell_count(), 1u);
  ASSERT_NE(f.language_at({0.05, 0.05, 0.05}), nullptr);
  f.clear_language();
  EXPECT_EQ(f.language_cell_count(), 0u);
  EXPECT_EQ(f.feature_cell_count(), 1u);
  EXPECT_THROW(f.language_mut({1, 1, 1, 1}), StateError);
}

TEST(Field, RejectsBadConstruction) {
  EXPECT_THROW(Field(SceneBounds{Vec3::Zero(), Vec3::Ones()}, 0.0, {}), InputError);
  EXPECT_THROW(Field(SceneBounds{Vec3::Zero(), Vec3::Ones()}, 0.1, {0, 1, 1}), InputError);
  EXPECT_THROW(Field(SceneBounds{Vec3::Ones(), Vec3::Zero()}, 0.1, {}), InputError);
}

TEST(Field, SortedKeysAreSorted) {
  Field f = make_field();
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    f.touch(Vec3(testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1)));
  }
  const auto keys = f.sorted_keys();
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
  EXPECT_EQ(keys.size(), f.cells().size());
}

}  // namespace
}  // namespace o2v
