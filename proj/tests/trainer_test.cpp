// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <numeric>

#include "o2v/synth_world.hpp"
#include "o2v/trainer.hpp"

namespace o2v {
namespace {

struct RoomFixture {
  SynthScene scene = generate_scene(0, 4);
  RGBDFrame frame;
  VoxelField<float> field;
  Decoders<float> dec = make_decoders<float>(16, 16, 4, 32, 3, 0);
  Config cfg;

  RoomFixture() : field(scene.mapping_bounds(), 0.16, FieldDims{16, 16, 32}) {
    frame = make_frame(scene, orbit_trajectory(scene, 10)[0], default_intrinsics(), 0);
  }
};

TEST(TrainStep, ZeroLearningRateLeavesParameters) {
  RoomFixture s;
  OptimizerSettings os;
  os.lr_features = 0;
  os.lr_mlp = 0;
  for (const auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    os.kind = kind;
    Optimizer<float> opt(os);
    Rng rng(1);
    train_step(s.field, s.dec, opt, s.frame, 64, training_sampling(s.cfg), 0.2, rng);
    const auto before_dec = s.dec.occupancy.params().weights;
    std::vector<float> before_geo;
    for (const auto& [key, cell] : s.field.cells()) {
      if (cell.slot >= 0) before_geo.push_back(s.field.geo(cell.slot).sum());
    }
    const LossReport r = train_step(s.field, s.dec, opt, s.frame, 64, training_sampling(s.cfg), 0.2, rng);
    EXPECT_GT(r.total(), 0);
    EXPECT_EQ(r.pixels, 64u);
    for (std::size_t l = 0; l < before_dec.size(); ++l) EXPECT_EQ(s.dec.occupancy.params().weights[l], before_dec[l]);
    std::size_t i = 0;
    for (const auto& [key, cell] : s.field.cells()) {
      if (cell.slot >= 0 && i < before_geo.size()) {
        EXPECT_EQ(s.field.geo(cell.slot).sum(), before_geo[i++]);
      }
    }
  }
}

TEST(TrainStep, LossDecreasesOnAFixedFrame) {
  RoomFixture s;
  Optimizer<float> opt(optimizer_settings(s.cfg));
  Rng rng(3);
  std::vector<double> losses;
  for (int step = 0; step < 150; ++step) {
    losses.push_back(train_step(s.field, s.dec, opt, s.frame, 256, training_sampling(s.cfg), 0.2, rng).total());
  }
  auto window = [&](int begin) { return std::accumulate(losses.begin() + begin, losses.begin() + begin + 50, 0.0) / 50; };
  EXPECT_LT(window(50), window(0));
  EXPECT_LE(window(100), window(50));
  EXPECT_LT(losses.back(), 0.25 * losses.front());
}

TEST(TrainStep, RejectsFrameWithoutDepth) {
  RoomFixture s;
  s.frame.depth.setZero();
  Optimizer<float> opt;
  Rng rng(0);
  EXPECT_THROW(train_step(s.field, s.dec, opt, s.frame, 8, training_sampling(s.cfg), 0.2, rng), InputError);
}

TEST(TrainRayHelpers, ValidPixelsAndRays) {
  RoomFixture s;
  s.frame.depth[5] = 0;
  const auto valid = valid_pixels(s.frame);
  EXPECT_EQ(valid.size(), s.frame.intrinsics.pixel_count() - 1);
  const TrainRay r = make_train_ray(s.frame, 3, 2);
  EXPECT_EQ(r.depth, s.frame.depth[static_cast<Eigen::Index>(s.frame.index(3, 2))]);
}

}  // namespace
}  // namespace o2v
