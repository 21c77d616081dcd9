#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "treecrowd/pointcloud.hpp"

using namespace treecrowd;

namespace {

PointCloud cloud_of(std::initializer_list<Point3> pts) {
  PointCloud c;
  for (const auto& p : pts) c.points.push_back({p, {}});
  return c;
}

DtmRaster flat_dtm(double z, std::size_t n = 11, double origin = 0.0, double cell = 1.0) {
  DtmRaster d;
  d.origin_x = d.origin_y = origin;
  d.cell_size = cell;
  d.n_cols = d.n_rows = n;
  d.elevations.assign(n * n, z);
  return d;
}

// Bilinear value from the textbook formula on the four corners.
double bilinear_oracle(const DtmRaster& d, double x, double y) {
  const double gx = (x - d.origin_x) / d.cell_size, gy = (y - d.origin_y) / d.cell_size;
  std::size_t c = std::min<std::size_t>(static_cast<std::size_t>(gx), d.n_cols - 2);
  std::size_t r = std::min<std::size_t>(static_cast<std::size_t>(gy), d.n_rows - 2);
  const double x1 = d.node_x(c), x2 = d.node_x(c + 1), y1 = d.node_y(r), y2 = d.node_y(r + 1);
  const double den = (x2 - x1) * (y2 - y1);
  return (d.at(c, r) * (x2 - x) * (y2 - y) + d.at(c + 1, r) * (x - x1) * (y2 - y) +
          d.at(c, r + 1) * (x2 - x) * (y - y1) + d.at(c + 1, r + 1) * (x - x1) * (y - y1)) /
         den;
}

} // namespace

TEST(ReadCloud, SingleLine) {
  auto c = parse_cloud("1.0 2.0 3.0\n", CloudFormat::ascii_xyz);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.points[0].position, (Point3{1, 2, 3}));
  EXPECT_EQ(c.points[0].color, (Rgb{0, 0, 0}));
}

TEST(ReadCloud, EmptyFileGivesEmptyCloudAndSentinelBox) {
  test::TempDir dir;
  detail::write_file_atomic(dir / "e.xyz", "");
  auto c = read_cloud(dir / "e.xyz", CloudFormat::ascii_xyz);
  EXPECT_TRUE(c.empty());
  EXPECT_TRUE(c.bbox().empty());
}

TEST(ReadCloud, CommentsAndBlankLinesSkipped) {
  auto c = parse_cloud("# header\n\n1 2 3\n  # indented\n4 5 6", CloudFormat::ascii_xyz);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.points[1].position, (Point3{4, 5, 6}));
}

TEST(ReadCloud, MalformedLineReportsLineNumber) {
  try {
    parse_cloud("1 2 3\n# c\n1 2 x\n", CloudFormat::ascii_xyz);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse_cloud("1 2\n", CloudFormat::ascii_xyz), ParseError);
  EXPECT_THROW(parse_cloud("1 2 3 4 5 256\n", CloudFormat::ascii_xyzrgb), ParseError);
}

TEST(ReadCloud, XyzrgbRoundTripPreservesColorAndOrder) {
  PointCloud c;
  c.points = {{{1.5, -2.25, 3.125}, {10, 20, 30}},
              {{0, 0, 0}, {255, 0, 7}},
              {{-1e3, 2e3, 0.000001}, {1, 2, 3}}};
  test::TempDir dir;
  write_cloud(dir / "c.xyz", c, CloudFormat::ascii_xyzrgb);
  EXPECT_EQ(read_cloud(dir / "c.xyz", CloudFormat::ascii_xyzrgb), c);
}

TEST(DtmElevation, ConstantRaster) {
  auto d = flat_dtm(5.0);
  EXPECT_DOUBLE_EQ(dtm_elevation(d, 3.3, 7.9), 5.0);
  EXPECT_DOUBLE_EQ(dtm_elevation(d, 10.0, 10.0), 5.0);
}

TEST(DtmElevation, UnitCellCenterIsCornerMean) {
  DtmRaster d;
  d.n_cols = d.n_rows = 2;
  d.elevations = {0, 0, 0, 4};
  EXPECT_DOUBLE_EQ(dtm_elevation(d, 0.5, 0.5), 1.0);
}

TEST(DtmElevation, RandomQueriesMatchFormula) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> z(-5, 5), q(0.0, 2.0);
  DtmRaster d;
  d.n_cols = d.n_rows = 3;
  for (int i = 0; i < 9; ++i) d.elevations.push_back(z(gen));
  for (int i = 0; i < 50; ++i) {
    const double x = q(gen), y = q(gen);
    EXPECT_NEAR(dtm_elevation(d, x, y), bilinear_oracle(d, x, y), 1e-12);
  }
}

TEST(DtmElevation, NodesExactAndBoundedByCorners) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> z(100, 200), q(0.0, 1.0);
  DtmRaster d;
  d.origin_x = 10;
  d.origin_y = -4;
  d.cell_size = 0.5;
  d.n_cols = 6;
  d.n_rows = 4;
  for (std::size_t i = 0; i < 24; ++i) d.elevations.push_back(z(gen));
  for (std::size_t r = 0; r < d.n_rows; ++r)
    for (std::size_t c = 0; c < d.n_cols; ++c)
      EXPECT_EQ(dtm_elevation(d, d.node_x(c), d.node_y(r)), d.at(c, r));
  for (int i = 0; i < 200; ++i) {
    const std::size_t c = gen() % (d.n_cols - 1), r = gen() % (d.n_rows - 1);
    const double x = d.node_x(c) + q(gen) * d.cell_size, y = d.node_y(r) + q(gen) * d.cell_size;
    const double v = dtm_elevation(d, x, y);
    const auto [lo, hi] = std::minmax({d.at(c, r), d.at(c + 1, r), d.at(c, r + 1), d.at(c + 1, r + 1)});
    EXPECT_GE(v, lo - 1e-9);
    EXPECT_LE(v, hi + 1e-9);
  }
}

TEST(DtmElevation, OutsideHullThrows) {
  auto d = flat_dtm(0.0);
  EXPECT_THROW(dtm_elevation(d, -0.001, 5), OutOfCoverage);
  EXPECT_THROW(dtm_elevation(d, 5, 10.001), OutOfCoverage);
}

TEST(DtmFormat, CornerHeaderFlipsNorthUpAndShiftsToCentres) {
  const auto d = parse_dtm("ncols 2\nnrows 2\nxllcorner 100\nyllcorner 200\ncellsize 2\n"
                           "NODATA_value -9999\n1 2\n3 4\n");
  EXPECT_DOUBLE_EQ(d.origin_x, 101.0);
  EXPECT_DOUBLE_EQ(d.origin_y, 201.0);
  EXPECT_EQ(d.at(0, 0), 3.0); // south-west
  EXPECT_EQ(d.at(1, 1), 2.0); // north-east
}

TEST(DtmFormat, NodataFilledFromNearestValid) {
  const auto d = parse_dtm("ncols 3\nnrows 1\nxllcenter 0\nyllcenter 0\ncellsize 1\n"
                           "NODATA_value -9999\n7 -9999 -9999\n");
  EXPECT_EQ(d.elevations, (std::vector<double>{7, 7, 7}));
  EXPECT_THROW(parse_dtm("ncols 1\nnrows 1\nxllcenter 0\nyllcenter 0\ncellsize 1\n"
                         "NODATA_value -9999\n-9999\n"),
               ParseError);
}

TEST(DtmFormat, WriteReadRoundTrip) {
  DtmRaster d;
  d.origin_x = 3.5;
  d.origin_y = -1.25;
  d.cell_size = 0.5;
  d.n_cols = 3;
  d.n_rows = 2;
  d.elevations = {1, 2, 3, 4, 5, 6.125};
  test::TempDir dir;
  write_dtm(dir / "d.asc", d);
  EXPECT_EQ(read_dtm(dir / "d.asc"), d);
}

TEST(VoxelSubsample, SingletonIsIdentity) {
  auto c = cloud_of({{1.234, 5.678, 9.1}});
  EXPECT_EQ(voxel_subsample(c), c);
}

TEST(VoxelSubsample, EightPointsInOneVoxelKeepNearestToMean) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.01, 0.19);
  PointCloud c;
  for (int i = 0; i < 8; ++i) c.points.push_back({{u(gen), u(gen), u(gen)}, {}});
  double mx = 0, my = 0, mz = 0;
  for (const auto& p : c.points) {
    mx += p.position.x / 8;
    my += p.position.y / 8;
    mz += p.position.z / 8;
  }
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t i = 0; i < 8; ++i) {
    const auto& p = c.points[i].position;
    const double d = std::hypot(p.x - mx, p.y - my, p.z - mz);
    if (d < best_d) best_d = d, best = i;
  }
  const auto out = voxel_subsample(c, 0.2);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out.points[0], c.points[best]);
}

TEST(VoxelSubsample, AdjacentVoxelsBothKept) {
  auto c = cloud_of({{0.0, 0, 0}, {0.3, 0, 0}});
  EXPECT_EQ(voxel_subsample(c, 0.2).size(), 2u);
}

TEST(VoxelSubsample, TieGoesToLowestIndex) {
  // Two points exactly symmetric about the voxel mean (dyadic values).
  auto c = cloud_of({{0.0625, 0.125, 0.125}, {0.1875, 0.125, 0.125}});
  const auto out = voxel_subsample(c, 0.25);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out.points[0], c.points[0]);
}

TEST(VoxelSubsample, SubsetDistinctVoxelsAndIdempotent) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  PointCloud c;
  for (int i = 0; i < 5000; ++i) c.points.push_back({{u(gen) + 1000.0, u(gen) - 50.0, u(gen)}, {}});
  const auto once = voxel_subsample(c, 0.2);
  EXPECT_LE(once.size(), c.size());
  std::set<std::tuple<long, long, long>> seen;
  std::size_t cursor = 0;
  for (const auto& p : once.points) {
    // Every output point is an input point, in input order.
    while (cursor < c.size() && !(c.points[cursor] == p)) ++cursor;
    ASSERT_LT(cursor, c.size());
    auto key = std::make_tuple(std::lround(std::floor(p.position.x / 0.2)),
                               std::lround(std::floor(p.position.y / 0.2)),
                               std::lround(std::floor(p.position.z / 0.2)));
    EXPECT_TRUE(seen.insert(key).second);
  }
  EXPECT_EQ(voxel_subsample(once, 0.2), once);
}

TEST(HeightAboveGround, FlatTerrain) {
  auto c = cloud_of({{1, 1, 3.5}, {2, 2, -1}});
  EXPECT_EQ(height_above_ground(c, flat_dtm(0.0)), (std::vector<double>{3.5, -1}));
  EXPECT_DOUBLE_EQ(height_above_ground(cloud_of({{4, 4, 12}}), flat_dtm(10.0))[0], 2.0);
}

TEST(HeightAboveGround, TiltedPlaneMatchesPlaneEquation) {
  // Bilinear interpolation reproduces a plane exactly.
  auto plane = [](double x, double y) { return 300.0 + 0.3 * x - 0.2 * y; };
  DtmRaster d;
  d.n_cols = d.n_rows = 21;
  d.cell_size = 0.5;
  for (std::size_t r = 0; r < 21; ++r)
    for (std::size_t col = 0; col < 21; ++col) d.elevations.push_back(plane(d.node_x(col), d.node_y(r)));
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0, 10), h(0, 30);
  PointCloud c;
  std::vector<double> expected;
  for (int i = 0; i < 20; ++i) {
    const double x = u(gen), y = u(gen), hh = h(gen);
    c.points.push_back({{x, y, plane(x, y) + hh}, {}});
    expected.push_back(hh);
  }
  const auto got = height_above_ground(c, d);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-9);
}

TEST(HeightAboveGround, OutsideListsIndices) {
  auto c = cloud_of({{1, 1, 0}, {-5, 1, 0}, {2, 2, 0}, {1, 50, 0}});
  try {
    height_above_ground(c, flat_dtm(0.0));
    FAIL();
  } catch (const OutOfCoverage& e) {
    EXPECT_EQ(e.indices(), (std::vector<std::size_t>{1, 3}));
  }
}

TEST(Colorize, RampEndpointsAndMidpoint) {
  EXPECT_EQ(colorize_by_height(0.0), (Rgb{0, 0, 255}));
  EXPECT_EQ(colorize_by_height(30.0), (Rgb{255, 0, 0}));
  EXPECT_EQ(colorize_by_height(15.0), (Rgb{0, 255, 0}));
  EXPECT_EQ(colorize_by_height(-4.0), (Rgb{0, 0, 255}));
  EXPECT_EQ(colorize_by_height(99.0), (Rgb{255, 0, 0}));
}

TEST(Colorize, RedNonDecreasingBlueNonIncreasing) {
  Rgb prev = colorize_by_height(-1.0);
  for (double h = -1.0; h <= 31.0; h += 0.01) {
    const auto c = colorize_by_height(h);
    EXPECT_GE(c.r, prev.r);
    EXPECT_LE(c.b, prev.b);
    prev = c;
  }
}

TEST(CropCylinder, IsolatedPointAndBoundary) {
  auto c = cloud_of({{0, 0, 1}, {100, 100, 1}});
  EXPECT_EQ(crop_cylinder(c, 0, 0, 5).size(), 1u);
  auto b = cloud_of({{5.0, 0, 0}, {3.0, 4.0, 0}, {5.0001, 0, 0}});
  EXPECT_EQ(crop_cylinder(b, 0, 0, 5.0).size(), 2u);
}

TEST(CropCylinder, MatchesBruteForceAndComposes) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(-10, 10);
  PointCloud c;
  for (int i = 0; i < 100; ++i) c.points.push_back({{u(gen), u(gen), u(gen)}, {}});
  PointCloud expected;
  for (const auto& p : c.points)
    if (std::hypot(p.position.x - 1.0, p.position.y + 2.0) <= 5.0) expected.points.push_back(p);
  EXPECT_EQ(crop_cylinder(c, 1.0, -2.0, 5.0), expected);
  EXPECT_EQ(crop_cylinder(crop_cylinder(c, 1.0, -2.0, 7.0), 1.0, -2.0, 3.0), crop_cylinder(c, 1.0, -2.0, 3.0));
}

TEST(MaskLowest, ZeroFractionUnchanged) {
  auto c = cloud_of({{0, 0, 3}, {0, 0, 1}});
  EXPECT_EQ(mask_lowest_fraction(c, 0.0), c);
}

TEST(MaskLowest, HundredPointsDropsFiveLowest) {
  PointCloud c;
  std::vector<int> zs(100);
  std::iota(zs.begin(), zs.end(), 1);
  std::shuffle(zs.begin(), zs.end(), std::mt19937(4));
  for (int z : zs) c.points.push_back({{0, 0, double(z)}, {}});
  PointCloud expected;
  for (const auto& p : c.points)
    if (p.position.z > 5) expected.points.push_back(p);
  EXPECT_EQ(mask_lowest_fraction(c, 0.05), expected);
}

TEST(MaskLowest, SubUnitCountAndTies) {
  PointCloud ten;
  for (int i = 0; i < 10; ++i) ten.points.push_back({{0, 0, double(i)}, {}});
  EXPECT_EQ(mask_lowest_fraction(ten, 0.05), ten);
  // Equal z: lowest index removed first.
  auto t = cloud_of({{1, 0, 0}, {2, 0, 0}, {3, 0, 5}, {4, 0, 5}});
  const auto out = mask_lowest_fraction(t, 0.25);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out.points[0].position.x, 2.0);
}

TEST(ViewParams, Validation) {
  EXPECT_NO_THROW(ViewParams{}.validate());
  EXPECT_THROW((ViewParams{0.0, 0.05, 0, 30}.validate()), InvalidArgument);
  EXPECT_THROW((ViewParams{5, 1.0, 0, 30}.validate()), InvalidArgument);
  EXPECT_THROW((ViewParams{5, 0.05, 30, 30}.validate()), InvalidArgument);
}
