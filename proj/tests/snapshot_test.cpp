// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "o2v/snapshot.hpp"
#include "random_map.hpp"

namespace o2v {
namespace {

TEST(Snapshot, RoundTripIsBitExact) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const MapSnapshot s = testing::random_map(seed);
    const auto bytes = serialize_map(s);
    const MapSnapshot back = parse_map(bytes);
    EXPECT_EQ(serialize_map(back), bytes) << "seed " << seed;
    EXPECT_EQ(back.digest, s.digest);
    EXPECT_EQ(back.retrieval, s.retrieval);
    EXPECT_EQ(back.field.feature_cell_count(), s.field.feature_cell_count());
    EXPECT_EQ(back.field.split_count(), s.field.split_count());
    EXPECT_EQ(back.config.to_text(), s.config.to_text());
  }
}

TEST(Snapshot, DecodersSurviveRoundTrip) {
  const MapSnapshot s = testing::random_map(7);
  const MapSnapshot back = parse_map(serialize_map(s));
  const Vec3 p(0.1, -0.2, 0.3);
  const Eigen::VectorXf phi = Eigen::VectorXf::Constant(s.config.geo_dim, 0.3f);
  EXPECT_EQ(decode_occupancy(back.decoders, p, phi), decode_occupancy(s.decoders, p, phi));
}

TEST(Snapshot, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "o2v_snapshot_test.o2vm";
  const MapSnapshot s = testing::random_map(3);
  save_map(path, s);
  EXPECT_EQ(serialize_map(load_map(path)), serialize_map(s));
  std::filesystem::remove(path);
}

TEST(Snapshot, EmptyMapRoundTrips) {
  const MapSnapshot s = make_empty_snapshot(Config{}, SceneBounds{Vec3(-1, -1, -1), Vec3(1, 1, 1)},
                                            CameraIntrinsics{50, 50, 15.5, 11.5, 32, 24}, 32);
  const auto bytes = serialize_map(s);
  EXPECT_EQ(serialize_map(parse_map(bytes)), bytes);
}

TEST(Snapshot, TruncationIsFormatError) {
  const auto bytes = serialize_map(testing::random_map(4));
  for (const std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{8}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW((void)parse_map(std::span(bytes).first(n)), FormatError) << n;
  }
}

TEST(Snapshot, CorruptionIsFormatError) {
  auto bytes = serialize_map(testing::random_map(5));
  bytes[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW((void)parse_map(bytes), FormatError);
  auto magic = serialize_map(testing::random_map(5));
  magic[0] = 'X';
  EXPECT_THROW((void)parse_map(magic), FormatError);
}

TEST(Snapshot, UnknownVersionIsVersionError) {
  auto bytes = serialize_map(testing::random_map(6));
  bytes[4] = 2;
  EXPECT_THROW((void)parse_map(bytes), VersionError);
}

TEST(Snapshot, DigestTracksContent) {
  MapSnapshot s = testing::random_map(8);
  const std::uint64_t d = snapshot_digest(s);
  EXPECT_EQ(d, s.digest);
  s.frame_counter += 1;
  EXPECT_NE(snapshot_digest(s), d);
}

TEST(Snapshot, FramePoseLookup) {
  MapSnapshot s = testing::random_map(9);
  s.frames.push_back({4242, Pose::translation_only(Vec3(1, 2, 3))});
  EXPECT_EQ(s.frame_pose(4242).translation(), Vec3(1, 2, 3));
  EXPECT_THROW((void)s.frame_pose(999999), std::out_of_range);
}

}  // namespace
}  // namespace o2v
