#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "treecrowd/synthetic.hpp"
#include "treecrowd/tiler.hpp"

using namespace treecrowd;

namespace {

double six(double v) { return std::round(v * 1e6) / 1e6; }

PointCloud random_cloud(std::size_t n, const Rect& r, std::uint64_t seed, bool quantise = false) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ux(r.xmin, r.xmax), uy(r.ymin, r.ymax), uz(0, 30);
  std::uniform_int_distribution<int> uc(0, 255);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    Point3 p{ux(gen), uy(gen), uz(gen)};
    if (quantise) p = {six(p.x), six(p.y), six(p.z)};
    c.points.push_back({p, {static_cast<std::uint8_t>(uc(gen)), static_cast<std::uint8_t>(uc(gen)),
                            static_cast<std::uint8_t>(uc(gen))}});
  }
  return c;
}

} // namespace

TEST(PlanGrid, ExactFit) {
  const auto p = plan_grid({0, 0, 60, 10}, {});
  EXPECT_EQ(p.n_x, 1u);
  EXPECT_EQ(p.n_y, 1u);
  EXPECT_DOUBLE_EQ(p.tile_length(), 60.0);
  EXPECT_DOUBLE_EQ(p.tile_depth(), 10.0);
}

TEST(PlanGrid, RoundsToNearestCount) {
  const auto p = plan_grid({0, 0, 130, 10}, {});
  EXPECT_EQ(p.n_len(), 2u);
  EXPECT_DOUBLE_EQ(p.tile_length(), 65.0);
}

TEST(PlanGrid, HalfTiesGoToFewerTiles) {
  EXPECT_EQ(grid_count(90.0, 60.0), 1u);  // 1.5
  EXPECT_EQ(grid_count(150.0, 60.0), 2u); // 2.5
  EXPECT_EQ(grid_count(151.0, 60.0), 3u);
  EXPECT_EQ(grid_count(1.0, 60.0), 1u);
}

TEST(PlanGrid, ForestProfileGivesTwentyByFourTiles) {
  const auto p = plan_grid({0, 0, 100, 16}, TileSpec::forest());
  EXPECT_EQ(p.n_x, 5u);
  EXPECT_EQ(p.n_y, 4u);
  EXPECT_DOUBLE_EQ(p.size_x, 20.0);
  EXPECT_DOUBLE_EQ(p.size_y, 4.0);
  EXPECT_DOUBLE_EQ(p.stretch_factor, 1.5);
}

TEST(PlanGrid, OrientationFollowsLongerAxisUnlessOverridden) {
  const auto tall = plan_grid({0, 0, 10, 60}, {});
  EXPECT_FALSE(tall.length_along_x);
  EXPECT_DOUBLE_EQ(tall.size_y, 60.0);
  EXPECT_DOUBLE_EQ(tall.size_x, 10.0);
  TileSpec s;
  s.orientation = StripOrientation::along_x;
  const auto forced = plan_grid({0, 0, 10, 60}, s);
  EXPECT_TRUE(forced.length_along_x);
  EXPECT_EQ(forced.n_x, 1u);
  EXPECT_EQ(forced.n_y, 6u);
}

TEST(PlanGrid, DegenerateBoxThrows) {
  EXPECT_THROW(plan_grid({0, 0, 0, 10}, {}), InvalidArgument);
  EXPECT_THROW(plan_grid({0, 0, 10, -1}, {}), InvalidArgument);
  EXPECT_THROW(plan_grid({0, 0, 10, 10}, TileSpec{0.0, 10.0, 1.0}), InvalidArgument);
}

TEST(PlanGrid, TileDimensionsStayNearTarget) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> w(60.0, 2000.0), h(10.0, 400.0);
  for (int i = 0; i < 2000; ++i) {
    const auto p = plan_grid({0, 0, w(gen), h(gen)}, TileSpec{60.0, 10.0, 1.0, StripOrientation::along_x});
    EXPECT_GE(p.size_x, 60.0 / 1.5);
    EXPECT_LE(p.size_x, 60.0 * 1.5);
    EXPECT_GE(p.size_y, 10.0 / 1.5);
    EXPECT_LE(p.size_y, 10.0 * 1.5);
  }
}

TEST(CutTiles, InteriorPointsLandInOneTile) {
  PointCloud c;
  for (int i = 0; i < 10; ++i) c.points.push_back({{70.0 + i, 5.0, 1.0}, {}});
  c.points.push_back({{0, 0, 0}, {}});
  c.points.push_back({{120, 20, 0}, {}});
  const auto plan = plan_grid({0, 0, 120, 20}, {});
  const auto tiles = cut_tiles(c, plan);
  ASSERT_EQ(tiles.size(), 4u);
  EXPECT_EQ(tiles[0].points.size(), 1u);
  EXPECT_EQ(tiles[1].points.size(), 10u);
  EXPECT_EQ(tiles[2].points.size(), 0u);
  EXPECT_EQ(tiles[3].points.size(), 1u); // max corner closes the last tile
}

TEST(CutTiles, InteriorBoundaryGoesToHigherTile) {
  PointCloud c;
  c.points.push_back({{60.0, 10.0, 0}, {}});
  const auto plan = plan_grid({0, 0, 120, 20}, {});
  const auto tiles = cut_tiles(c, plan);
  EXPECT_EQ(tiles[3].points.size(), 1u);
}

TEST(CutTiles, PartitionMatchesIntervalOracle) {
  const Rect ext{-13.7, 402.1, 166.3, 421.9};
  const auto c = random_cloud(1000, ext, 21);
  auto plan = plan_grid(ext, {});
  ASSERT_EQ(plan.n_x, 3u);
  ASSERT_EQ(plan.n_y, 2u);
  const auto tiles = cut_tiles(c, plan);
  std::size_t total = 0;
  for (const auto& t : tiles) total += t.points.size();
  EXPECT_EQ(total, c.size());
  for (const auto& p : c.points) {
    std::size_t hits = 0, owner = 0;
    for (std::size_t r = 0; r < plan.n_y; ++r) {
      for (std::size_t col = 0; col < plan.n_x; ++col) {
        const auto b = plan.tile_bounds(r, col);
        const bool in_x = p.position.x >= b.xmin && (p.position.x < b.xmax || (col + 1 == plan.n_x && p.position.x <= b.xmax));
        const bool in_y = p.position.y >= b.ymin && (p.position.y < b.ymax || (r + 1 == plan.n_y && p.position.y <= b.ymax));
        if (in_x && in_y) ++hits, owner = r * plan.n_x + col;
      }
    }
    ASSERT_EQ(hits, 1u);
    const auto& tp = tiles[owner].points.points;
    EXPECT_NE(std::find(tp.begin(), tp.end(), p), tp.end());
  }
}

TEST(Stretch, UnitFactorIsIdentity) {
  Tile t;
  t.bounds = {10, 20, 30, 24};
  t.points = random_cloud(20, t.bounds, 3);
  EXPECT_EQ(apply_stretch(t, 1.0), t);
  const auto [x, y] = unstretch_annotation(12.5, 21.0, t);
  EXPECT_EQ(x, 12.5);
  EXPECT_EQ(y, 21.0);
}

TEST(Stretch, ScalesAboutLowerLeftCorner) {
  Tile t;
  t.bounds = {10, 20, 30, 24};
  t.points.points.push_back({{12, 20, 7}, {}});
  const auto s = apply_stretch(t, 1.5);
  EXPECT_DOUBLE_EQ(s.points.points[0].position.x, 13.0);
  EXPECT_DOUBLE_EQ(s.points.points[0].position.z, 7.0);
  EXPECT_DOUBLE_EQ(s.stretch_factor, 1.5);
  const auto [x, y] = unstretch_annotation(13.0, 20.0, s);
  EXPECT_DOUBLE_EQ(x, 12.0);
  EXPECT_DOUBLE_EQ(y, 20.0);
  EXPECT_THROW(apply_stretch(t, 0.9), InvalidArgument);
}

TEST(Stretch, RoundTripAndDistanceScaling) {
  Tile t;
  t.bounds = {500, 800, 520, 804};
  t.points = random_cloud(200, t.bounds, 9);
  const auto s = apply_stretch(t, 1.5);
  const auto back = unstretch_tile(s);
  for (std::size_t i = 0; i < t.points.size(); ++i) {
    const auto& a = t.points.points[i].position;
    const auto& b = back.points.points[i].position;
    EXPECT_NEAR(a.x, b.x, 1e-9);
    EXPECT_NEAR(a.y, b.y, 1e-9);
    EXPECT_EQ(a.z, s.points.points[i].position.z);
  }
  for (std::size_t i = 1; i < t.points.size(); ++i) {
    const auto& a0 = t.points.points[i - 1].position;
    const auto& a1 = t.points.points[i].position;
    const auto& b0 = s.points.points[i - 1].position;
    const auto& b1 = s.points.points[i].position;
    EXPECT_NEAR(std::hypot(b1.x - b0.x, b1.y - b0.y), 1.5 * std::hypot(a1.x - a0.x, a1.y - a0.y), 1e-9);
  }
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> ux(500, 520), uy(800, 804);
  for (int i = 0; i < 100; ++i) {
    const double x = ux(gen), y = uy(gen);
    const auto [sx, sy] = stretch_position(x, y, s);
    const auto [wx, wy] = unstretch_annotation(sx, sy, s);
    EXPECT_NEAR(wx, x, 1e-9);
    EXPECT_NEAR(wy, y, 1e-9);
  }
}

TEST(Bundle, EmptyTile) {
  Tile t;
  t.tile_id = "r000_c000";
  t.bounds = {0, 0, 20, 4};
  test::TempDir dir;
  const auto manifest = export_tile_bundle(t, dir.path());
  const auto m = nlohmann::json::parse(detail::read_file(manifest));
  EXPECT_EQ(m["point_count"], 0);
  EXPECT_EQ(detail::read_file(dir / kPointsFile), "");
  EXPECT_EQ(import_tile_bundle(dir.path()), t);
}

TEST(Bundle, OnePointFileMatchesCloudFormat) {
  Tile t;
  t.tile_id = "r001_c002";
  t.row = 1;
  t.col = 2;
  t.bounds = {0, 0, 20, 4};
  t.points.points.push_back({{1.5, 2.25, 3.0}, {1, 2, 3}});
  test::TempDir dir;
  export_tile_bundle(t, dir.path());
  EXPECT_EQ(detail::read_file(dir / kPointsFile), "1.500000 2.250000 3.000000 1 2 3\n");
  const auto m = nlohmann::json::parse(detail::read_file(dir / kManifestFile));
  EXPECT_EQ(m["tile_id"], "r001_c002");
  EXPECT_EQ(m["bounds"], nlohmann::json({0.0, 0.0, 20.0, 4.0}));
  EXPECT_EQ(m["points_file"], "points.xyz");
  EXPECT_EQ(m["dtm_file"], "dtm.asc");
}

TEST(Bundle, RoundTripIsFieldForField) {
  const Rect ext{100.0, 200.0, 140.0, 208.0};
  const auto cloud = random_cloud(500, ext, 12, true);
  const auto dtm = synthetic_dtm(ext, 0.5);
  const auto tiles = cut_tiles(cloud, plan_grid(ext, TileSpec::forest()), &dtm);
  test::TempDir dir;
  for (const auto& t : tiles) {
    // Stretched points are written at 6 decimals; quantise to compare exactly.
    auto s = apply_stretch(t, 1.5);
    for (auto& p : s.points.points) p.position = {six(p.position.x), six(p.position.y), p.position.z};
    for (auto& e : s.dtm_patch.elevations) e = six(e);
    export_tile_bundle(s, dir / s.tile_id);
    EXPECT_EQ(import_tile_bundle(dir / s.tile_id / kManifestFile), s);
    EXPECT_GE(s.dtm_patch.node_hull().xmax, s.bounds.xmax);
    EXPECT_LE(s.dtm_patch.node_hull().ymin, s.bounds.ymin);
  }
}
