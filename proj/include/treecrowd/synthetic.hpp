#ifndef TREECROWD_SYNTHETIC_HPP
#define TREECROWD_SYNTHETIC_HPP

// Synthetic terrain and point clouds for demos and tests.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "treecrowd/crowdsim.hpp"
#include "treecrowd/evaluator.hpp"
#include "treecrowd/pointcloud.hpp"

namespace treecrowd {

/// Gently tilted terrain covering `extent` (plus one cell) with nodes every
/// `cell_size` metres.
inline DtmRaster synthetic_dtm(const Rect& extent, double cell_size = 1.0, double base = 250.0,
                               double slope_x = 0.02, double slope_y = -0.01) {
  DtmRaster dtm;
  dtm.cell_size = cell_size;
  dtm.origin_x = extent.xmin - cell_size;
  dtm.origin_y = extent.ymin - cell_size;
  dtm.n_cols = static_cast<std::size_t>(std::ceil(extent.width() / cell_size)) + 3;
  dtm.n_rows = static_cast<std::size_t>(std::ceil(extent.height() / cell_size)) + 3;
  dtm.elevations.resize(dtm.n_cols * dtm.n_rows);
  for (std::size_t r = 0; r < dtm.n_rows; ++r)
    for (std::size_t c = 0; c < dtm.n_cols; ++c)
      dtm.at(c, r) = base + slope_x * (dtm.node_x(c) - extent.xmin) +
                     slope_y * (dtm.node_y(r) - extent.ymin);
  return dtm;
}

/// Ground returns on a regular grid plus, per tree, a trunk (ring of points
/// up to 60 % of the height) and a spherical crown.
inline PointCloud synthetic_forest_cloud(const Rect& extent, std::span<const GroundTruthStem> stems,
                                         const DtmRaster& dtm, std::uint64_t seed = 7,
                                         double ground_spacing = 0.25) {
  SimRng rng(seed);
  PointCloud cloud;
  auto add = [&](double x, double y, double z) { cloud.points.push_back({{x, y, z}, {}}); };
  for (double y = extent.ymin; y <= extent.ymax; y += ground_spacing)
    for (double x = extent.xmin; x <= extent.xmax; x += ground_spacing)
      add(x, y, dtm_elevation(dtm, x, y) + 0.02 * rng.normal());
  for (const auto& s : stems) {
    const double base = dtm_elevation(dtm, s.x, s.y);
    for (double z = 0.0; z < 0.6 * s.height; z += 0.1) {
      for (int k = 0; k < 8; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 8.0;
        add(s.x + 0.15 * std::cos(a), s.y + 0.15 * std::sin(a), base + z);
      }
    }
    const double crown_r = std::max(1.0, 0.2 * s.height);
    const double cz = base + s.height - crown_r;
    for (int i = 0; i < 300; ++i) {
      const double u = rng.uniform(-1.0, 1.0);
      const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double rr = crown_r * std::cbrt(rng.uniform());
      const double sxy = std::sqrt(1.0 - u * u);
      const double x = std::clamp(s.x + rr * sxy * std::cos(phi), extent.xmin, extent.xmax);
      const double y = std::clamp(s.y + rr * sxy * std::sin(phi), extent.ymin, extent.ymax);
      add(x, y, cz + rr * u);
    }
  }
  return cloud;
}

} // namespace treecrowd

#endif // TREECROWD_SYNTHETIC_HPP
