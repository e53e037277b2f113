// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "o2v/scene_io.hpp"

namespace o2v {
namespace {

namespace fs = std::filesystem;

class SceneIo : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("o2v_scene_io_" + std::to_string(::getpid()));
    fs::remove_all(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  fs::path root_;
};

TEST_F(SceneIo, ExportAndReopen) {
  SynthExportOptions o;
  o.seed = 2;
  o.frames = 4;
  o.corrupt_frames = 1;
  o.eval_stride = 1;
  export_synthetic_scene(root_, o);
  const SceneDirectory d = SceneDirectory::open(root_);
  const SynthStream st = synth_stream(o);
  ASSERT_EQ(d.frame_count(), 5u);
  EXPECT_EQ(d.frame_ids(), st.frame_ids);
  ASSERT_TRUE(d.scene().has_value());
  EXPECT_EQ(d.scene()->objects.size(), 4u);

  const auto provider = d.provider();
  const StubProvider stub(st.scene);
  for (std::size_t i = 0; i < d.frame_count(); ++i) {
    const RGBDFrame f = d.load_frame(i);
    const RGBDFrame g = make_frame(st.scene, st.poses[i], st.intrinsics, st.frame_ids[i]);
    EXPECT_EQ(f.depth, g.depth);
    EXPECT_LE((f.rgb - g.rgb).cwiseAbs().maxCoeff(), 0.5f / 255.0f + 1e-6f);
    EXPECT_LT((f.pose.rotation() - g.pose.rotation()).norm(), 1e-12);
    EXPECT_LT((f.pose.translation() - g.pose.translation()).norm(), 1e-12);
    FramePerception expected = stub.perceive(g);
    if (st.corrupted.contains(g.frame_id)) corrupt_perception(expected, o.corrupt_confidence);
    EXPECT_EQ(provider->perceive(f), expected);
  }
  for (const auto& label : st.scene.object_labels()) {
    EXPECT_NEAR((provider->embed_text(label) - stub_embed(label)).norm(), 0, 1e-6);
  }
}

TEST_F(SceneIo, QueriesCoverLabels) {
  SynthExportOptions o;
  o.frames = 6;
  o.eval_stride = 2;
  export_synthetic_scene(root_, o);
  const auto queries = SceneDirectory::open(root_).queries();
  const SynthStream st = synth_stream(o);
  ASSERT_EQ(queries.size(), st.scene.object_labels().size());
  int instances = 0;
  for (const auto& q : queries) {
    instances += q.expected_instances;
    for (const auto id : q.frames) EXPECT_EQ(id % 2, 0u);
  }
  EXPECT_EQ(instances, 4);
}

TEST_F(SceneIo, MissingSceneJsonIsFormatError) {
  fs::create_directories(root_);
  EXPECT_THROW((void)SceneDirectory::open(root_), FormatError);
  std::ofstream(root_ / "scene.json") << "{\"intrinsics\": 3}";
  EXPECT_THROW((void)SceneDirectory::open(root_), FormatError);
}

TEST_F(SceneIo, PoseFileRoundTrip) {
  fs::create_directories(root_);
  const Pose p = Pose::look_at(Vec3(0.123456789, -1.5, 1.25), Vec3(0.3, 0.2, 0.1));
  write_pose(root_ / "p.pose", p);
  const Pose q = read_pose(root_ / "p.pose");
  EXPECT_EQ(q.rotation(), p.rotation());
  EXPECT_EQ(q.translation(), p.translation());
  std::ofstream(root_ / "bad.pose") << "1 2 3";
  EXPECT_THROW((void)read_pose(root_ / "bad.pose"), FormatError);
}

TEST_F(SceneIo, QueryFileRoundTrip) {
  fs::create_directories(root_);
  const std::vector<QuerySpec> qs{{"chair", {0, 3, 6}, 2}, {"lamp", {}, 1}};
  write_queries(root_ / "q.json", qs);
  const auto back = read_queries(root_ / "q.json");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].text, "chair");
  EXPECT_EQ(back[0].frames, qs[0].frames);
  EXPECT_EQ(back[1].expected_instances, 1);
}

}  // namespace
}  // namespace o2v
