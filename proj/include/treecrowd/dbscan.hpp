#ifndef TREECROWD_DBSCAN_HPP
#define TREECROWD_DBSCAN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <unordered_map>
#include <vector>

#include "treecrowd/error.hpp"

namespace treecrowd {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double planar_distance(double ax, double ay, double bx, double by) {
  return std::hypot(ax - bx, ay - by);
}

/// Uniform hash grid for fixed-radius neighbour queries in the plane. Cell
/// size equals the query radius, so a query visits 3 x 3 cells.
class GridIndex2D {
public:
  GridIndex2D(std::span<const Point2> points, double radius)
      : points_(points), radius_(radius) {
    if (!(radius > 0.0)) throw InvalidArgument("radius must be > 0");
    cells_.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
      cells_[key(cell_of(points[i].x), cell_of(points[i].y))].push_back(i);
  }

  /// Indices within `radius` (inclusive) of point `i`, itself included, in
  /// ascending index order.
  std::vector<std::size_t> neighbours(std::size_t i) const {
    std::vector<std::size_t> out;
    const auto& p = points_[i];
    const auto cx = cell_of(p.x);
    const auto cy = cell_of(p.y);
    const double r2 = radius_ * radius_;
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find(key(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (auto j : it->second) {
          const double ex = points_[j].x - p.x;
          const double ey = points_[j].y - p.y;
          if (ex * ex + ey * ey <= r2) out.push_back(j);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

private:
  std::int64_t cell_of(double v) const {
    return static_cast<std::int64_t>(std::floor(v / radius_));
  }
  static std::uint64_t key(std::int64_t cx, std::int64_t cy) {
    return (static_cast<std::uint64_t>(cx) << 32) ^
           (static_cast<std::uint64_t>(cy) & 0xffffffffULL);
  }

  std::span<const Point2> points_;
  double radius_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

inline constexpr int kNoise = -1;

/// Density-based clustering of planar points.
///
/// A point is core when at least `n_min` points (itself included) lie within
/// `eps`. Clusters are the connected components of core points under
/// eps-reachability; a border point joins the cluster of the lowest-index
/// core point within eps; everything else is noise (-1). Labels are numbered
/// by each cluster's lowest member index, so the result is deterministic.
inline std::vector<int> dbscan_xy(std::span<const Point2> points, double eps,
                                  std::size_t n_min) {
  if (!(eps > 0.0)) throw InvalidArgument("eps must be > 0");
  if (n_min < 1) throw InvalidArgument("n_min must be >= 1");
  const std::size_t n = points.size();
  std::vector<int> labels(n, kNoise);
  if (n == 0) return labels;

  const GridIndex2D index(points, eps);
  std::vector<std::vector<std::size_t>> nbrs(n);
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    nbrs[i] = index.neighbours(i);
    core[i] = nbrs[i].size() >= n_min;
  }

  // Union-find over core points.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i]) continue;
    for (auto j : nbrs[i]) {
      if (j <= i || !core[j]) continue;
      const auto a = find(i), b = find(j);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }

  // Component root of every clustered point; borders attach via the
  // lowest-index core neighbour.
  constexpr auto none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> root(n, none);
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) {
      root[i] = find(i);
      continue;
    }
    for (auto j : nbrs[i]) {
      if (core[j]) {
        root[i] = find(j);
        break;
      }
    }
  }
  std::unordered_map<std::size_t, int> label_of_root;
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (root[i] == none) continue;
    auto [it, inserted] = label_of_root.try_emplace(root[i], next);
    if (inserted) ++next;
    labels[i] = it->second;
  }
  return labels;
}

/// Number of clusters in a label vector.
inline std::size_t cluster_count(std::span<const int> labels) {
  int m = -1;
  for (int l : labels) m = std::max(m, l);
  return static_cast<std::size_t>(m + 1);
}

} // namespace treecrowd

#endif // TREECROWD_DBSCAN_HPP
