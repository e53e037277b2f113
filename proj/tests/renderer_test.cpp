// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "gradient_check.hpp"
#include "o2v/renderer.hpp"
#include "test_support.hpp"

namespace o2v {
namespace {

Ray forward_ray() {
  Ray r;
  r.origin = Vec3(0, 0, -5);
  return r;
}

const SceneBounds kWide{Vec3::Constant(-10), Vec3::Constant(10)};

TEST(SampleRay, Stratification) {
  SamplingConfig cfg;
  cfg.n_strat = 32;
  cfg.n_surf = 8;
  cfg.near = 0.1;
  cfg.far = 4.1;
  const RaySampleBatch b = sample_ray(forward_ray(), kWide, cfg, 0.0, nullptr);
  ASSERT_EQ(b.size(), 32u);
  for (int k = 0; k < 32; ++k) EXPECT_NEAR(b.depths[static_cast<std::size_t>(k)], 0.1 + 0.125 * (k + 0.5), 1e-12);
  Rng rng(4);
  const RaySampleBatch j = sample_ray(forward_ray(), kWide, cfg, 0.0, &rng);
  for (int k = 0; k < 32; ++k) {
    EXPECT_GE(j.depths[static_cast<std::size_t>(k)], 0.1 + 0.125 * k);
    EXPECT_LE(j.depths[static_cast<std::size_t>(k)], 0.1 + 0.125 * (k + 1));
  }
}

TEST(SampleRay, SurfaceSamplesAndOrder) {
  SamplingConfig cfg;
  Rng rng(8);
  std::mt19937_64 r2(3);
  for (int i = 0; i < 500; ++i) {
    const double gt = testing::uniform(r2, 0.2, 5.5);
    const RaySampleBatch b = sample_ray(forward_ray(), kWide, cfg, gt, &rng);
    EXPECT_EQ(b.size(), static_cast<std::size_t>(cfg.n_strat + cfg.n_surf));
    EXPECT_TRUE(std::adjacent_find(b.depths.begin(), b.depths.end(), std::greater_equal<>()) == b.depths.end());
    const auto near_surface = std::count_if(b.depths.begin(), b.depths.end(),
                                            [&](double d) { return std::abs(d - gt) <= cfg.surface_half_width; });
    EXPECT_GE(near_surface, cfg.n_surf);
    for (std::size_t k = 0; k < b.size(); ++k) EXPECT_NEAR(b.points[k].z(), -5 + b.depths[k], 1e-9);
  }
}

TEST(SampleRay, MissingBoundsGivesEmptyBatch) {
  Ray r = forward_ray();
  r.direction = -Vec3::UnitZ();
  EXPECT_TRUE(sample_ray(r, SceneBounds{Vec3::Constant(-1), Vec3::Constant(1)}, {}, 0.0, nullptr).empty());
}

TEST(TerminationWeights, Examples) {
  const std::vector<double> opaque{1, 0.3, 0.9};
  EXPECT_EQ(termination_weights<double>(opaque), (std::vector<double>{1, 0, 0}));
  const std::vector<double> half{0.5, 0.5};
  EXPECT_EQ(termination_weights<double>(half), (std::vector<double>{0.5, 0.25}));
  const std::vector<double> empty(5, 0.0);
  EXPECT_EQ(termination_weights<double>(empty), empty);
}

TEST(TerminationWeights, SumIdentityAndPadding) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 80)(rng);
    std::vector<double> o(static_cast<std::size_t>(n));
    for (auto& x : o) x = testing::uniform(rng, 0, 1);
    const auto w = termination_weights<double>(o);
    double sum = 0, prod = 1;
    for (std::size_t i = 0; i < o.size(); ++i) {
      sum += w[i];
      prod *= 1 - o[i];
    }
    EXPECT_NEAR(sum, 1 - prod, 1e-12);
    std::vector<double> padded = o;
    padded.insert(padded.end(), 4, 0.0);
    const auto wp = termination_weights<double>(padded);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(wp[i], w[i]);
    for (std::size_t i = w.size(); i < wp.size(); ++i) EXPECT_EQ(wp[i], 0.0);
  }
}

TEST(RenderDepthColor, Examples) {
  {
    const std::vector<double> d{2, 3}, w{1, 0};
    const std::vector<Eigen::Vector3d> c(2, Eigen::Vector3d::Ones());
    EXPECT_EQ(render_depth_color(d, w, c).first, 2.0);
  }
  {
    const std::vector<double> d{1, 2}, w{0.5, 0.25};
    const std::vector<Eigen::Vector3d> c{Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0)};
    const auto [depth, rgb] = render_depth_color(d, w, c);
    EXPECT_EQ(depth, 1.0);
    EXPECT_EQ(rgb, Eigen::Vector3d(0.5, 0.25, 0));
  }
  {
    const std::vector<double> d{1, 2}, w{0, 0};
    const std::vector<Eigen::Vector3d> c(2, Eigen::Vector3d::Ones());
    const auto [depth, rgb] = render_depth_color(d, w, c);
    EXPECT_EQ(depth, 0.0);
    EXPECT_EQ(rgb, Eigen::Vector3d::Zero());
  }
  const std::vector<double> d{1}, w{1, 2};
  const std::vector<Eigen::Vector3d> c(2);
  EXPECT_THROW(render_depth_color(d, w, c), InputError);
}

TEST(MedianTermination, PicksHalfMass) {
  const std::vector<double> d{1, 2, 3, 4};
  EXPECT_EQ(median_termination_depth(d, std::vector<double>{0.1, 0.3, 0.5, 0.1}), 3.0);
  EXPECT_EQ(median_termination_depth(d, std::vector<double>{0.1, 0.4, 0.4, 0.1}), 2.0);
  EXPECT_EQ(median_termination_depth(d, std::vector<double>{0.1, 0.1, 0.1, 0.1}), 4.0);
  EXPECT_EQ(median_termination_depth({}, {}), 0.0);
}

class LanguageRender : public ::testing::Test {
 protected:
  VoxelField<double> field{SceneBounds{Vec3::Constant(-1), Vec3::Constant(1)}, 0.16, FieldDims{2, 2, 4}};
  RaySampleBatch batch;

  void SetUp() override {
    batch.depths = {1.0, 1.1};
    batch.points = {Vec3(0.05, 0.05, 0.05), Vec3(0.21, 0.05, 0.05)};
  }
  void put(const VoxelKey& key, const Eigen::Vector4d& e) {
    LanguageCell& c = field.language_mut(key);
    c.queue = {{e, 1, 1}};
    c.fused = e;
    c.accumulated = 1;
  }
};

TEST_F(LanguageRender, SingleCellReturnsItsEmbedding) {
  const Eigen::Vector4d e = Eigen::Vector4d(1, 2, 3, 4).normalized();
  put({0, 0, 0, 0}, e);
  const std::vector<double> w{1.0, 0.0};
  const auto f = render_language(field, batch, w, 1.0, 0.64);
  ASSERT_TRUE(f.has_value());
  EXPECT_NEAR((*f - e).norm(), 0, 1e-12);
}

TEST_F(LanguageRender, CancellationIsAbsent) {
  const Eigen::Vector4d e = Eigen::Vector4d(1, 0, 0, 0);
  put({0, 0, 0, 0}, e);
  put({1, 0, 0, 0}, -e);
  const std::vector<double> w{0.5, 0.5};
  EXPECT_FALSE(render_language(field, batch, w, 1.05, 0.64).has_value());
}

TEST_F(LanguageRender, EmptyCellsAreAbsent) {
  const std::vector<double> w{0.5, 0.5};
  EXPECT_FALSE(render_language(field, batch, w, 1.05, 0.64).has_value());
}

TEST_F(LanguageRender, ScaleInvariantAndWindowed) {
  put({0, 0, 0, 0}, Eigen::Vector4d(1, 0, 0, 0));
  put({1, 0, 0, 0}, Eigen::Vector4d(0, 1, 0, 0));
  const std::vector<double> w{0.3, 0.1}, w2{0.6, 0.2};
  const auto a = render_language(field, batch, w, 1.05, 0.64);
  const auto b = render_language(field, batch, w2, 1.05, 0.64);
  ASSERT_TRUE(a && b);
  EXPECT_NEAR((*a - *b).norm(), 0, 1e-12);
  EXPECT_NEAR((*a - Eigen::Vector4d(3, 1, 0, 0).normalized()).norm(), 0, 1e-12);
  const auto c = render_language(field, batch, w, 1.15, 0.07);
  ASSERT_TRUE(c);
  EXPECT_NEAR((*c - Eigen::Vector4d(0, 1, 0, 0)).norm(), 0, 1e-12);
}

TEST(Losses, Examples) {
  const std::vector<double> d{2.0}, gt{2.0};
  const std::vector<Eigen::Vector3d> c{Eigen::Vector3d(0.1, 0.2, 0.3)};
  const LossReport zero = compute_losses(d, gt, c, c, 0.2);
  EXPECT_EQ(zero.depth_loss, 0);
  EXPECT_EQ(zero.color_loss, 0);
  const std::vector<double> one{1.0};
  EXPECT_EQ(compute_losses(one, gt, c, c, 0.2).depth_loss, 1.0);
  LossReport r;
  r.depth_loss = 1;
  r.color_loss = 0.5;
  r.lambda_c = 0.2;
  EXPECT_DOUBLE_EQ(r.total(), 1.1);
  const std::vector<double> invalid{0.0};
  EXPECT_EQ(compute_losses(one, invalid, c, c, 0.2).depth_loss, 0.0);
  EXPECT_THROW(compute_losses({}, {}, {}, {}, 0.2), InputError);
}

TEST(Render, LossMatchesForwardRender) {
  VoxelField<double> field(SceneBounds{Vec3::Constant(-1), Vec3::Constant(1)}, 0.16, FieldDims{16, 16, 8});
  const auto dec = make_decoders<double>(16, 16, 4, 32, 3, 2, false);
  TrainRay ray;
  ray.ray.origin = Vec3(0, 0, -0.9);
  ray.depth = 1.0;
  ray.rgb = Eigen::Vector3d(0.2, 0.4, 0.6);
  Rng rng(1);
  const std::vector<RaySampleBatch> samples{sample_ray(ray.ray, field.bounds(), SamplingConfig{}, 1.0, &rng)};
  const std::vector<TrainRay> rays{ray};
  const LossReport loss = loss_and_gradients(field, dec, std::span<const TrainRay>(rays),
                                             std::span<const RaySampleBatch>(samples), 0.2,
                                             static_cast<Gradients<double>*>(nullptr));
  const auto out = render_samples(field, dec, std::span<const RaySampleBatch>(samples), true);
  EXPECT_NEAR(loss.depth_loss, std::pow(out[0].depth - 1.0, 2), 1e-12);
  EXPECT_NEAR(loss.color_loss, (out[0].rgb - ray.rgb).squaredNorm(), 1e-12);
}

TEST(Render, UntrainedMapIsUniformGray) {
  VoxelField<float> field(SceneBounds{Vec3::Constant(-1), Vec3::Constant(1)}, 0.16, FieldDims{16, 16, 8});
  const auto dec = make_decoders<float>(16, 16, 4, 32, 3, 0);
  std::vector<Ray> rays(4, forward_ray());
  rays[0].origin = Vec3(0, 0, -0.5);
  rays[1].origin = Vec3(0.3, 0.1, -0.5);
  rays[2].origin = Vec3(-0.3, 0.1, -0.5);
  rays[3].origin = Vec3(0.1, -0.4, -0.5);
  RenderSettings s = render_settings(Config{});
  const auto out = render_rays(field, dec, std::span<const Ray>(rays), s);
  for (const auto& o : out) {
    EXPECT_NEAR(o.rgb[0], o.rgb[1], 1e-7);
    EXPECT_NEAR(o.rgb[0], out[0].rgb[0], 1e-6);
    EXPECT_GT(o.rgb[0], 0.49);
  }
}

TEST(Gradients, MatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = testing::check_gradients(seed, seed == 0, 200, 20);
    EXPECT_LT(r.max_rel_error, 1e-3) << "seed " << seed;
    EXPECT_GT(r.feature_checked, 0u);
  }
}

}  // namespace
}  // namespace o2v
