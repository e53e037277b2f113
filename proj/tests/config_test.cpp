// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "o2v/camera.hpp"
#include "o2v/config.hpp"

namespace o2v {
namespace {

TEST(Config, DefaultsValidate) { EXPECT_NO_THROW(Config{}.validate()); }

TEST(Config, TextRoundTrip) {
  Config c;
  c.voxel_edge = 0.2;
  c.voting = false;
  c.lr_feat = 0.0123456789012345;
  c.optimizer = OptimizerKind::kSgd;
  c.seed = 18446744073709551557ULL;
  Config d;
  d.apply_text(c.to_text());
  EXPECT_EQ(c.to_map(), d.to_map());
  EXPECT_EQ(d.lr_feat, c.lr_feat);
  EXPECT_EQ(d.seed, c.seed);
  EXPECT_FALSE(d.voting);
  EXPECT_EQ(d.optimizer, OptimizerKind::kSgd);
}

TEST(Config, CommentsAndWhitespace) {
  Config c;
  c.apply_text("# comment\n  alpha = 3.5  # trailing\n\nsplit=false\n");
  EXPECT_EQ(c.alpha, 3.5);
  EXPECT_FALSE(c.split);
}

TEST(Config, Errors) {
  Config c;
  EXPECT_THROW(c.set("no_such_key", "1"), InputError);
  EXPECT_THROW(c.set("m_pixels", "many"), InputError);
  EXPECT_THROW(c.set("m_pixels", "2.5"), InputError);
  EXPECT_THROW(c.set("m_pixels", "99999999999"), InputError);
  EXPECT_THROW(c.apply_text("voxel_edge\n"), InputError);
  EXPECT_THROW(c.apply_text("voxel_edge = -1\n"), InputError);
  EXPECT_THROW(c.apply_text("near = 5\nfar = 1\n"), InputError);
  EXPECT_THROW(load_config("/nonexistent/o2v.cfg"), InputError);
}

}  // namespace
}  // namespace o2v
