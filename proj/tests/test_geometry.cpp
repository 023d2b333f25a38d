#include <gtest/gtest.h>

#include "tg/geometry.hpp"

using namespace tg;

TEST(Geometry, NormalizeYawWrapsIntoHalfOpenRange) {
  EXPECT_DOUBLE_EQ(normalize_yaw(0.0), 0.0);
  EXPECT_DOUBLE_EQ(normalize_yaw(kPi), -kPi);
  EXPECT_DOUBLE_EQ(normalize_yaw(-kPi), -kPi);
  EXPECT_NEAR(normalize_yaw(3 * kPi + 0.25), -kPi + 0.25, 1e-12);
  EXPECT_NEAR(normalize_yaw(-0.5), -0.5, 1e-15);
  for (double y = -20; y < 20; y += 0.37) {
    double n = normalize_yaw(y);
    EXPECT_GE(n, -kPi);
    EXPECT_LT(n, kPi);
    EXPECT_NEAR(std::cos(n), std::cos(y), 1e-9);
    EXPECT_NEAR(std::sin(n), std::sin(y), 1e-9);
  }
}

TEST(Geometry, FootprintSwapsExtentsAtQuarterTurn) {
  Extents e{0.5, 0.2, 0.1};
  Rect r0 = footprint({1, 1, 0, 0}, e);
  EXPECT_DOUBLE_EQ(r0.width(), 1.0);
  EXPECT_DOUBLE_EQ(r0.height(), 0.4);
  Rect r1 = footprint({1, 1, 0, kPi / 2}, e);
  EXPECT_DOUBLE_EQ(r1.width(), 0.4);
  EXPECT_DOUBLE_EQ(r1.height(), 1.0);
  Rect r2 = footprint({0, 0, 0, kPi / 4}, {0.5, 0.5, 0.1});
  EXPECT_NEAR(r2.width(), std::sqrt(2.0), 1e-12);
}

TEST(Geometry, TouchingRectsDoNotOverlap) {
  Rect a{0, 0, 1, 1};
  EXPECT_FALSE(a.overlaps({1, 0, 2, 1}));
  EXPECT_TRUE(a.overlaps({0.99, 0.5, 2, 1}));
  EXPECT_DOUBLE_EQ(point_rect_distance(2, 1, a), 1.0);
  EXPECT_DOUBLE_EQ(point_rect_distance(0.5, 0.5, a), 0.0);
}

TEST(Geometry, GridMarksOnlyStrictlyOverlappedCells) {
  OccupancyGrid g({0, 0, 1, 1}, 0.1);
  EXPECT_EQ(g.rows(), 10);
  EXPECT_EQ(g.cols(), 10);
  g.mark({0.2, 0.2, 0.4, 0.4}, 3);
  int blocked = 0;
  for (std::size_t i = 0; i < g.size(); ++i) blocked += g.blocked(g.cell_at(i));
  EXPECT_EQ(blocked, 4);
  EXPECT_EQ(g.owner({2, 2}), 3);
  EXPECT_FALSE(g.blocked({1, 2}));
}

TEST(Geometry, BfsRespectsWalls) {
  OccupancyGrid g({0, 0, 0.5, 0.3}, 0.1);
  // Wall along column 2 with no gap.
  for (int r = 0; r < 3; ++r) g.set_owner({r, 2}, 0);
  auto d = bfs_distances(g, {0, 0});
  EXPECT_EQ(d[g.index({2, 1})], 3);
  EXPECT_EQ(d[g.index({0, 3})], -1);
  g.set_owner({2, 2}, -1);
  d = bfs_distances(g, {0, 0});
  EXPECT_EQ(d[g.index({0, 3})], 7);
  auto path = bfs_path(g, {0, 0}, {0, 4});
  ASSERT_EQ(path.size(), 9u);
  EXPECT_EQ(path.front(), (Cell{0, 0}));
  EXPECT_EQ(path.back(), (Cell{0, 4}));
}

TEST(Geometry, NearestFreeToCenterBreaksTiesByRowThenColumn) {
  OccupancyGrid g({0, 0, 0.4, 0.4}, 0.1);
  auto c = nearest_free_to_center(g);
  ASSERT_TRUE(c);
  EXPECT_EQ(*c, (Cell{1, 1}));
  g.set_owner({1, 1}, 0);
  EXPECT_EQ(*nearest_free_to_center(g), (Cell{1, 2}));
}
