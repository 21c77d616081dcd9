#ifndef TREECROWD_INTEGRATOR_HPP
#define TREECROWD_INTEGRATOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "treecrowd/dbscan.hpp"
#include "treecrowd/error.hpp"

namespace treecrowd {

/// A stem marking: a vertical cylinder of fixed radius standing at (x, y) in
/// world coordinates.
struct CylinderAnnotation {
  static constexpr double radius = 0.5;

  double x = 0.0;
  double y = 0.0;
  double height = 0.0;

  friend bool operator==(const CylinderAnnotation&, const CylinderAnnotation&) = default;
};

/// Milliseconds since the Unix epoch.
using Timestamp = std::int64_t;

/// One worker's answer for one tile.
struct Submission {
  std::string worker_id;
  std::string tile_id;
  std::vector<CylinderAnnotation> annotations;
  bool no_stems = false;
  Timestamp submitted_at = 0;

  void validate() const {
    if (no_stems && !annotations.empty())
      throw InvalidArgument("no_stems submission must not carry annotations");
    for (const auto& a : annotations) {
      if (!std::isfinite(a.x) || !std::isfinite(a.y) || !std::isfinite(a.height))
        throw InvalidArgument("annotation coordinates must be finite");
      if (!(a.height > 0.0)) throw InvalidArgument("annotation height must be > 0");
    }
  }

  friend bool operator==(const Submission&, const Submission&) = default;
};

struct IntegrationParams {
  double eps = 1.0;
  std::size_t n_min = 4;
  std::size_t n_max = 15;
  double eps_step = 0.5;
  double eps_floor = 0.05;
  double d_pos = 1.0;
  double d_h = 2.0;

  void validate() const {
    if (!(eps > 0.0)) throw InvalidArgument("eps must be > 0");
    if (n_min < 2) throw InvalidArgument("n_min must be >= 2");
    if (n_max <= n_min) throw InvalidArgument("n_max must be > n_min");
    if (!(eps_step > 0.0)) throw InvalidArgument("eps_step must be > 0");
    if (!(eps_floor > 0.0)) throw InvalidArgument("eps_floor must be > 0");
    if (!(d_pos > 0.0)) throw InvalidArgument("d_pos must be > 0");
    if (!(d_h > 0.0)) throw InvalidArgument("d_h must be > 0");
  }
};

/// An annotation together with the worker who placed it.
struct PooledAnnotation {
  CylinderAnnotation annotation;
  std::string worker_id;
};

enum class ClusterWarning { none, unsplittable };

/// Cluster members are indices into the annotation pool, ascending.
struct Cluster {
  int label = 0;
  std::vector<std::size_t> members;
  bool refined = false;
  ClusterWarning warning = ClusterWarning::none;
  std::vector<std::size_t> purged_members; ///< in removal order
};

struct IntegratedStem {
  std::string tile_id;
  double x = 0.0;
  double y = 0.0;
  double height = 0.0;
  std::size_t support = 0;
  int source_cluster = 0;
  bool unsplittable = false;
  /// Some worker contributes more than one surviving annotation.
  bool multi_contribution = false;

  friend bool operator==(const IntegratedStem&, const IntegratedStem&) = default;
};

namespace detail {

inline std::vector<Point2> planar(std::span<const PooledAnnotation> pool,
                                  std::span<const std::size_t> members) {
  std::vector<Point2> pts;
  pts.reserve(members.size());
  for (auto m : members) pts.push_back({pool[m].annotation.x, pool[m].annotation.y});
  return pts;
}

inline std::vector<Cluster> group_labels(std::span<const int> labels,
                                         std::span<const std::size_t> members) {
  std::vector<Cluster> out(cluster_count(labels));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kNoise) continue;
    out[static_cast<std::size_t>(labels[i])].label = labels[i];
    out[static_cast<std::size_t>(labels[i])].members.push_back(members[i]);
  }
  return out;
}

/// Lower median: the element at (n - 1) / 2 of the sorted values.
inline double lower_median(std::vector<double> v) {
  auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

} // namespace detail

/// Next radius of the refinement schedule: arithmetic steps while they stay
/// at or above one step, then halving, never below the floor.
inline std::optional<double> next_refinement_eps(double current,
                                                 const IntegrationParams& params) {
  double next = current - params.eps_step;
  if (next < params.eps_step - 1e-12) next = current / 2.0;
  if (next < params.eps_floor) {
    if (current > params.eps_floor + 1e-12) return params.eps_floor;
    return std::nullopt;
  }
  return next;
}

/// Splits a cluster holding n_max or more acquisitions by re-clustering its
/// members at successively smaller radii. Members that become noise are
/// dropped. If the floor radius still leaves an oversized cluster, that
/// cluster comes back flagged unsplittable.
inline std::vector<Cluster> refine_oversized(const Cluster& cluster,
                                             std::span<const PooledAnnotation> pool,
                                             const IntegrationParams& params) {
  if (cluster.members.size() < params.n_max) return {cluster};
  const auto pts = detail::planar(pool, cluster.members);
  double eps = params.eps;
  while (auto next = next_refinement_eps(eps, params)) {
    eps = *next;
    const auto labels = dbscan_xy(pts, eps, params.n_min);
    auto subs = detail::group_labels(labels, cluster.members);
    const bool oversized = std::any_of(subs.begin(), subs.end(), [&](const Cluster& c) {
      return c.members.size() >= params.n_max;
    });
    const bool last = !next_refinement_eps(eps, params).has_value();
    if (!oversized || last) {
      for (auto& s : subs) {
        s.label = cluster.label;
        if (s.members.size() >= params.n_max) {
          s.refined = false;
          s.warning = ClusterWarning::unsplittable;
        } else {
          s.refined = true;
        }
      }
      return subs;
    }
  }
  // eps already at or below the floor on entry.
  Cluster c = cluster;
  c.refined = false;
  c.warning = ClusterWarning::unsplittable;
  return {c};
}

/// Removes, one at a time, the member deviating most from the cluster's
/// component-wise lower-median tree until every member is within d_pos
/// (planar) and d_h (height). A member violates when either bound is
/// exceeded strictly; the worst is the largest max(dist/d_pos, |dh|/d_h),
/// lowest index on ties.
inline Cluster purge(Cluster cluster, std::span<const PooledAnnotation> pool,
                     const IntegrationParams& params) {
  auto& members = cluster.members;
  while (members.size() > 1) {
    std::vector<double> xs, ys, hs;
    xs.reserve(members.size());
    ys.reserve(members.size());
    hs.reserve(members.size());
    for (auto m : members) {
      xs.push_back(pool[m].annotation.x);
      ys.push_back(pool[m].annotation.y);
      hs.push_back(pool[m].annotation.height);
    }
    const double mx = detail::lower_median(std::move(xs));
    const double my = detail::lower_median(std::move(ys));
    const double mh = detail::lower_median(std::move(hs));

    std::optional<std::size_t> worst;
    double worst_score = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto& a = pool[members[i]].annotation;
      const double dist = planar_distance(a.x, a.y, mx, my);
      const double dh = std::abs(a.height - mh);
      if (!(dist > params.d_pos || dh > params.d_h)) continue;
      const double score = std::max(dist / params.d_pos, dh / params.d_h);
      if (!worst || score > worst_score) {
        worst = i;
        worst_score = score;
      }
    }
    if (!worst) break;
    cluster.purged_members.push_back(members[*worst]);
    members.erase(members.begin() + static_cast<std::ptrdiff_t>(*worst));
  }
  return cluster;
}

/// Every stage of one tile's integration, kept for inspection.
struct IntegrationTrace {
  std::vector<PooledAnnotation> pool;   ///< canonical order
  std::vector<int> initial_labels;      ///< parallel to pool
  std::vector<Cluster> initial_clusters;
  std::vector<Cluster> refined_clusters;
  std::vector<Cluster> purged_clusters; ///< includes clusters later discarded
  std::vector<Cluster> final_clusters;  ///< support >= n_min
  std::vector<IntegratedStem> stems;    ///< sorted by (x, y)
};

/// Pools all annotations of one tile and integrates them: cluster, refine
/// oversized clusters, purge, drop thin clusters, average the survivors.
inline IntegrationTrace integrate_tile_traced(std::span<const Submission> submissions,
                                              const IntegrationParams& params) {
  params.validate();
  IntegrationTrace t;
  std::string tile_id;
  for (const auto& s : submissions) {
    s.validate();
    if (tile_id.empty()) tile_id = s.tile_id;
    else if (s.tile_id != tile_id)
      throw InvalidArgument("submissions reference different tiles: " + tile_id +
                            ", " + s.tile_id);
    for (const auto& a : s.annotations) t.pool.push_back({a, s.worker_id});
  }
  // Canonical order makes the result independent of submission order.
  std::sort(t.pool.begin(), t.pool.end(), [](const PooledAnnotation& a, const PooledAnnotation& b) {
    return std::tie(a.annotation.x, a.annotation.y, a.annotation.height, a.worker_id) <
           std::tie(b.annotation.x, b.annotation.y, b.annotation.height, b.worker_id);
  });
  if (t.pool.empty()) return t;

  std::vector<std::size_t> all(t.pool.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto pts = detail::planar(t.pool, all);
  t.initial_labels = dbscan_xy(pts, params.eps, params.n_min);
  t.initial_clusters = detail::group_labels(t.initial_labels, all);

  for (const auto& c : t.initial_clusters)
    for (auto& r : refine_oversized(c, t.pool, params)) t.refined_clusters.push_back(std::move(r));

  int next_label = 0;
  for (const auto& c : t.refined_clusters) {
    auto p = purge(c, t.pool, params);
    p.label = next_label++;
    t.purged_clusters.push_back(p);
    if (p.members.size() >= params.n_min) t.final_clusters.push_back(std::move(p));
  }

  for (const auto& c : t.final_clusters) {
    IntegratedStem s;
    s.tile_id = tile_id;
    std::map<std::string, std::size_t> per_worker;
    for (auto m : c.members) {
      const auto& a = t.pool[m].annotation;
      s.x += a.x;
      s.y += a.y;
      s.height += a.height;
      if (++per_worker[t.pool[m].worker_id] > 1) s.multi_contribution = true;
    }
    const double n = static_cast<double>(c.members.size());
    s.x /= n;
    s.y /= n;
    s.height /= n;
    s.support = c.members.size();
    s.source_cluster = c.label;
    s.unsplittable = c.warning == ClusterWarning::unsplittable;
    t.stems.push_back(std::move(s));
  }
  std::sort(t.stems.begin(), t.stems.end(), [](const IntegratedStem& a, const IntegratedStem& b) {
    return std::tie(a.x, a.y, a.source_cluster) < std::tie(b.x, b.y, b.source_cluster);
  });
  return t;
}

inline std::vector<IntegratedStem> integrate_tile(std::span<const Submission> submissions,
                                                  const IntegrationParams& params = {}) {
  return integrate_tile_traced(submissions, params).stems;
}

/// Integrates a multi-tile submission set tile by tile (tiles in id order).
/// `jobs` > 1 integrates tiles concurrently; the output does not depend on it.
inline std::vector<IntegratedStem> integrate_campaign(std::span<const Submission> submissions,
                                                      const IntegrationParams& params = {},
                                                      std::size_t jobs = 1) {
  params.validate();
  std::map<std::string, std::vector<Submission>> by_tile;
  for (const auto& s : submissions) by_tile[s.tile_id].push_back(s);
  std::vector<const std::vector<Submission>*> groups;
  for (const auto& [id, subs] : by_tile) groups.push_back(&subs);

  std::vector<std::vector<IntegratedStem>> results(groups.size());
  jobs = std::max<std::size_t>(1, jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < groups.size(); ++i)
      results[i] = integrate_tile(*groups[i], params);
  } else {
    std::vector<std::future<void>> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < groups.size(); i += jobs)
          results[i] = integrate_tile(*groups[i], params);
      }));
    }
    for (auto& f : workers) f.get();
  }
  std::vector<IntegratedStem> out;
  for (auto& r : results) out.insert(out.end(), r.begin(), r.end());
  return out;
}

} // namespace treecrowd

#endif // TREECROWD_INTEGRATOR_HPP
