#ifndef TREECROWD_TEST_ORACLES_HPP
#define TREECROWD_TEST_ORACLES_HPP

// Deliberately naive reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "treecrowd/dbscan.hpp"
#include "treecrowd/evaluator.hpp"

namespace treecrowd::oracle {

/// O(n^2) DBSCAN: breadth-first expansion over core points, borders to the
/// lowest-index core neighbour, labels by lowest member index.
inline std::vector<int> dbscan(const std::vector<Point2>& pts, double eps, std::size_t n_min) {
  const std::size_t n = pts.size();
  auto near = [&](std::size_t a, std::size_t b) {
    const double dx = pts[a].x - pts[b].x, dy = pts[a].y - pts[b].y;
    return dx * dx + dy * dy <= eps * eps;
  };
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) c += near(i, j);
    core[i] = c >= n_min;
  }
  std::vector<long> comp(n, -1);
  long n_comp = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (!core[s] || comp[s] >= 0) continue;
    std::deque<std::size_t> q{s};
    comp[s] = n_comp;
    while (!q.empty()) {
      const auto a = q.front();
      q.pop_front();
      for (std::size_t b = 0; b < n; ++b) {
        if (core[b] && comp[b] < 0 && near(a, b)) {
          comp[b] = n_comp;
          q.push_back(b);
        }
      }
    }
    ++n_comp;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (core[j] && near(i, j)) {
        comp[i] = comp[j];
        break;
      }
    }
  }
  std::map<long, int> relabel;
  std::vector<int> labels(n, kNoise);
  for (std::size_t i = 0; i < n; ++i) {
    if (comp[i] < 0) continue;
    auto [it, ins] = relabel.try_emplace(comp[i], static_cast<int>(relabel.size()));
    labels[i] = it->second;
  }
  return labels;
}

/// Partition as a sorted list of sorted index sets, noise as its own set.
inline std::pair<std::vector<std::vector<std::size_t>>, std::vector<std::size_t>>
canonical_partition(const std::vector<int>& labels, const std::vector<std::size_t>& ids) {
  std::map<int, std::vector<std::size_t>> groups;
  std::vector<std::size_t> noise;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kNoise) noise.push_back(ids[i]);
    else groups[labels[i]].push_back(ids[i]);
  }
  std::vector<std::vector<std::size_t>> sets;
  for (auto& [l, g] : groups) {
    std::sort(g.begin(), g.end());
    sets.push_back(g);
  }
  std::sort(sets.begin(), sets.end());
  std::sort(noise.begin(), noise.end());
  return {sets, noise};
}

struct BestMatching {
  std::size_t cardinality = 0;
  double total = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs; ///< ascending gt
};

/// Enumerates every one-to-one matching on the admissible graph. Keeps
/// maximum cardinality, then minimum total distance, then lexicographically
/// smallest pair list. Exponential: small instances only.
template <typename Stem>
BestMatching exhaustive_match(const std::vector<GroundTruthStem>& gt, const std::vector<Stem>& stems,
                              MatchThresholds th = {}) {
  auto dist = [&](std::size_t g, std::size_t s) {
    return std::hypot(gt[g].x - stems[s].x, gt[g].y - stems[s].y);
  };
  auto admissible = [&](std::size_t g, std::size_t s) {
    return dist(g, s) <= th.d_pos && std::abs(gt[g].height - stems[s].height) <= th.d_h;
  };
  BestMatching best;
  bool have = false;
  std::vector<bool> used(stems.size());
  std::vector<std::pair<std::size_t, std::size_t>> cur;
  std::function<void(std::size_t, double)> rec = [&](std::size_t g, double total) {
    if (g == gt.size()) {
      const bool better = !have || cur.size() > best.cardinality ||
                          (cur.size() == best.cardinality &&
                           (total < best.total - 1e-9 ||
                            (std::abs(total - best.total) <= 1e-9 && cur < best.pairs)));
      if (better) {
        best = {cur.size(), total, cur};
        have = true;
      }
      return;
    }
    rec(g + 1, total);
    for (std::size_t s = 0; s < stems.size(); ++s) {
      if (used[s] || !admissible(g, s)) continue;
      used[s] = true;
      cur.push_back({g, s});
      rec(g + 1, total + dist(g, s));
      cur.pop_back();
      used[s] = false;
    }
  };
  rec(0, 0.0);
  return best;
}

/// Maximum bipartite matching size by repeated augmenting paths (Kuhn).
inline std::size_t max_matching(const std::vector<std::vector<std::size_t>>& adj, std::size_t n_right) {
  std::vector<long> match_r(n_right, -1);
  std::size_t size = 0;
  for (std::size_t u = 0; u < adj.size(); ++u) {
    std::vector<bool> seen(n_right);
    std::function<bool(std::size_t)> augment = [&](std::size_t a) {
      for (auto v : adj[a]) {
        if (seen[v]) continue;
        seen[v] = true;
        if (match_r[v] < 0 || augment(static_cast<std::size_t>(match_r[v]))) {
          match_r[v] = static_cast<long>(a);
          return true;
        }
      }
      return false;
    };
    size += augment(u);
  }
  return size;
}

} // namespace treecrowd::oracle

#endif // TREECROWD_TEST_ORACLES_HPP
