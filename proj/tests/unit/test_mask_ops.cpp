// Copyright 2026 The Tamperloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "tamperloc/errors.hpp"
#include "tamperloc/mask_ops.hpp"

namespace tamperloc::masks {
namespace {

bool subset(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] && !b.data[i]) return false;
  return true;
}

TEST(EdgeMask, EmptyAndFullGiveEmpty) {
  EXPECT_TRUE(edge_mask(Mask(32, 32), 2).grid.empty());
  EXPECT_TRUE(edge_mask(Mask(32, 32, 1), 2).grid.empty());
}

TEST(EdgeMask, CenteredSquareRing) {
  Mask gt(32, 32);
  for (int y = 11; y < 21; ++y)
    for (int x = 11; x < 21; ++x) gt.at(y, x) = 1;
  const auto e = edge_mask(gt, 2);
  EXPECT_EQ(e.dilation_radius, 2);
  EXPECT_EQ(e.grid, oracle::edge(gt, 2));
  // Outer bound 14x14 starting at 9, inner hole 6x6 starting at 13.
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const bool outer = y >= 9 && y < 23 && x >= 9 && x < 23;
      const bool hole = y >= 13 && y < 19 && x >= 13 && x < 19;
      ASSERT_EQ(e.grid.at(y, x), outer && !hole ? 1 : 0) << y << "," << x;
    }
  EXPECT_EQ(e.grid.count(), 14u * 14u - 6u * 6u);
}

TEST(EdgeMask, MatchesOracleOnRandomMasks) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 60; ++i) {
    const int h = 1 + static_cast<int>(rng() % 40), w = 1 + static_cast<int>(rng() % 40);
    const int r = 1 + static_cast<int>(rng() % 4);
    const Mask gt = oracle::random_mask(h, w, rng);
    ASSERT_EQ(edge_mask(gt, r).grid, oracle::edge(gt, r));
    ASSERT_EQ(dilate(gt, r), oracle::dilate(gt, r));
    ASSERT_EQ(erode(gt, r), oracle::erode(gt, r));
  }
}

TEST(EdgeMask, RadiusMonotone) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 30; ++i) {
    const Mask gt = oracle::random_mask(32, 32, rng);
    for (int r = 1; r < 5; ++r) ASSERT_TRUE(subset(edge_mask(gt, r).grid, edge_mask(gt, r + 1).grid));
  }
}

TEST(EdgeMask, BadInputRejected) {
  Mask gt(8, 8);
  gt.at(1, 1) = 2;
  EXPECT_THROW(edge_mask(gt, 2), DataError);
  EXPECT_THROW(edge_mask(Mask(8, 8), 0), ConfigError);
}

TEST(PatchEdgeMask, SinglePixelSetsOneBlock) {
  EdgeMask e{Mask(64, 64), 1};
  e.grid.at(17, 3) = 1;
  const auto pm = patch_edge_mask(e, 16);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) ASSERT_EQ(pm.grid.at(y, x), (y / 16 == 1 && x / 16 == 0) ? 1 : 0);
  EXPECT_TRUE(patch_edge_mask(EdgeMask{Mask(64, 64), 1}, 16).grid.empty());
}

TEST(PatchEdgeMask, MatchesBlockAnyOracleAndProperties) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Mask m = oracle::random_mask(64, 64, rng);
    const int p = (i % 3 == 0) ? 8 : 16;
    const auto pm = patch_edge_mask(EdgeMask{m, 1}, p);
    ASSERT_EQ(pm.grid, oracle::block_any(m, p));
    ASSERT_TRUE(subset(m, pm.grid));
    ASSERT_EQ(patch_edge_mask(EdgeMask{pm.grid, 1}, p).grid, pm.grid);
  }
}

TEST(PatchEdgeMask, IndivisibleRejected) {
  EXPECT_THROW(patch_edge_mask(EdgeMask{Mask(30, 32), 1}, 16), ConfigError);
}

TEST(Downsample, IdentityAndAllOnes) {
  std::mt19937_64 rng(4);
  const Mask m = oracle::random_mask(16, 16, rng);
  EXPECT_EQ(downsample_mask(m, 16, 16), m);
  for (int s : {8, 4, 2, 1}) EXPECT_EQ(downsample_mask(Mask(16, 16, 1), s, s), Mask(s, s, 1));
}

TEST(Downsample, BlockToHalfResolution) {
  Mask m(64, 64);
  for (int y = 16; y < 32; ++y)
    for (int x = 0; x < 16; ++x) m.at(y, x) = 1;
  const Mask d = downsample_mask(m, 32, 32);
  EXPECT_EQ(d, oracle::footprint_or(m, 32, 32));
  EXPECT_EQ(d.count(), 64u);
  EXPECT_EQ(d.at(8, 0), 1);
}

TEST(Downsample, MatchesFootprintOracle) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Mask m = oracle::random_mask(64, 64, rng);
    for (int s : {32, 16, 4}) {
      const Mask d = downsample_mask(m, s, s / 2);
      ASSERT_EQ(d, oracle::footprint_or(m, s, s / 2));
      if (!m.empty()) ASSERT_FALSE(d.empty());
    }
  }
}

TEST(Downsample, IncompatibleRejected) {
  EXPECT_THROW(downsample_mask(Mask(10, 10), 3, 5), ConfigError);
}

TEST(EdgeRadius, ScalesFromReference) {
  EXPECT_EQ(default_edge_radius(1024), 7);
  EXPECT_EQ(default_edge_radius(256), 2);
  EXPECT_EQ(default_edge_radius(32), 1);
}

}  // namespace
}  // namespace tamperloc::masks
