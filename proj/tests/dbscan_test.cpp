#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "treecrowd/dbscan.hpp"

using namespace treecrowd;

namespace {

std::vector<Point2> random_points(std::mt19937_64& gen, std::size_t n, double span) {
  std::uniform_real_distribution<double> u(0.0, span);
  std::vector<Point2> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back({u(gen), u(gen)});
  return pts;
}

} // namespace

TEST(Dbscan, CoincidentPointsFormOneCluster) {
  std::vector<Point2> pts(5, {2.0, 3.0});
  EXPECT_EQ(dbscan_xy(pts, 1.0, 4), (std::vector<int>{0, 0, 0, 0, 0}));
}

TEST(Dbscan, TwoSeparatedGroups) {
  std::vector<Point2> pts;
  for (int i = 0; i < 5; ++i) pts.push_back({0.1 * i, 0.0});
  for (int i = 0; i < 5; ++i) pts.push_back({3.0 + 0.1 * i, 0.0});
  const auto labels = dbscan_xy(pts, 1.0, 4);
  EXPECT_EQ(labels, oracle::dbscan(pts, 1.0, 4));
  EXPECT_EQ(cluster_count(labels), 2u);
  EXPECT_EQ(labels, (std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1}));
}

TEST(Dbscan, SparsePointsAreNoise) {
  std::vector<Point2> pts{{0, 0}, {5, 0}, {0, 5}};
  EXPECT_EQ(dbscan_xy(pts, 1.0, 4), (std::vector<int>{kNoise, kNoise, kNoise}));
}

TEST(Dbscan, NeighbourhoodIncludesSelfAndBoundary) {
  // Exactly eps apart counts; with n_min = 2 a pair is a cluster.
  std::vector<Point2> pts{{0, 0}, {1.0, 0}};
  EXPECT_EQ(dbscan_xy(pts, 1.0, 2), (std::vector<int>{0, 0}));
  EXPECT_EQ(dbscan_xy(pts, 1.0, 1), (std::vector<int>{0, 0}));
  EXPECT_EQ(dbscan_xy(std::vector<Point2>{{0, 0}}, 1.0, 1), (std::vector<int>{0}));
}

TEST(Dbscan, BorderJoinsLowestIndexCore) {
  // Point 0 is a border between two groups; only their nearest members
  // (indices 1 and 5, both core) reach it.
  std::vector<Point2> pts{{0, 0}};
  for (int i = 0; i < 4; ++i) pts.push_back({-1.0 - 0.1 * i, 0});
  for (int i = 0; i < 4; ++i) pts.push_back({1.0 + 0.1 * i, 0});
  const auto labels = dbscan_xy(pts, 1.0, 5);
  EXPECT_EQ(labels, oracle::dbscan(pts, 1.0, 5));
  EXPECT_EQ(labels[0], labels[1]);
  EXPECT_NE(labels[1], labels[5]);
}

TEST(Dbscan, InvalidParameters) {
  std::vector<Point2> pts{{0, 0}};
  EXPECT_THROW(dbscan_xy(pts, 0.0, 4), InvalidArgument);
  EXPECT_THROW(dbscan_xy(pts, 1.0, 0), InvalidArgument);
  EXPECT_TRUE(dbscan_xy(std::vector<Point2>{}, 1.0, 4).empty());
}

TEST(Dbscan, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 gen(101);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + gen() % 150;
    const auto pts = random_points(gen, n, 3.0 + static_cast<double>(gen() % 20));
    const double eps = 0.2 + static_cast<double>(gen() % 100) / 50.0;
    const std::size_t n_min = 1 + gen() % 8;
    ASSERT_EQ(dbscan_xy(pts, eps, n_min), oracle::dbscan(pts, eps, n_min))
        << "trial " << trial << " n=" << n << " eps=" << eps << " n_min=" << n_min;
  }
}

TEST(Dbscan, NegativeCoordinatesAndLargeOffsets) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto pts = random_points(gen, 100, 8.0);
    for (auto& p : pts) p = {p.x - 4.0 + 1e5, p.y - 4.0 - 3e6};
    ASSERT_EQ(dbscan_xy(pts, 0.7, 3), oracle::dbscan(pts, 0.7, 3));
  }
}

TEST(Dbscan, PermutationEquivariantUpToRenaming) {
  std::mt19937_64 gen(33);
  for (int trial = 0; trial < 100; ++trial) {
    // Well-separated blobs and sparse noise keep border ties out of play.
    std::vector<Point2> pts;
    std::normal_distribution<double> nd(0.0, 0.15);
    for (int b = 0; b < 5; ++b)
      for (int i = 0; i < 8; ++i) pts.push_back({10.0 * b + nd(gen), 3.0 + nd(gen)});
    for (int i = 0; i < 6; ++i) pts.push_back({10.0 * i + 5.0, 20.0});
    std::vector<std::size_t> ids(pts.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    const auto ref = oracle::canonical_partition(dbscan_xy(pts, 1.0, 4), ids);

    auto perm = ids;
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<Point2> shuffled;
    for (auto i : perm) shuffled.push_back(pts[i]);
    EXPECT_EQ(oracle::canonical_partition(dbscan_xy(shuffled, 1.0, 4), perm), ref);
  }
}

TEST(GridIndex, NeighboursMatchBruteForce) {
  std::mt19937_64 gen(2);
  const auto pts = random_points(gen, 300, 10.0);
  const GridIndex2D index(pts, 0.8);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<std::size_t> expected;
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y) <= 0.8) expected.push_back(j);
    ASSERT_EQ(index.neighbours(i), expected);
  }
}
