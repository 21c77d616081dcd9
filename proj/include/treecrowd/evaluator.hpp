#ifndef TREECROWD_EVALUATOR_HPP
#define TREECROWD_EVALUATOR_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "treecrowd/dbscan.hpp"
#include "treecrowd/error.hpp"
#include "treecrowd/integrator.hpp"

namespace treecrowd {

struct GroundTruthStem {
  double x = 0.0;
  double y = 0.0;
  double height = 0.0;

  friend bool operator==(const GroundTruthStem&, const GroundTruthStem&) = default;
};

struct MatchThresholds {
  double d_pos = 1.0;
  double d_h = 2.0;
};

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> tp_pairs; ///< (gt, stem), ascending gt
  std::vector<std::size_t> fn_gt;
  std::vector<std::size_t> fp_stems;
  MatchThresholds thresholds;

  std::size_t tp() const { return tp_pairs.size(); }
  std::size_t fn() const { return fn_gt.size(); }
  std::size_t fp() const { return fp_stems.size(); }
};

namespace detail {

/// Minimum-cost assignment of every row to a distinct column (rows <= cols).
/// Returns the column of each row.
inline std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return {};
  const std::size_t m = cost[0].size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  std::vector<bool> used(m + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_of(n);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) col_of[p[j] - 1] = j - 1;
  return col_of;
}

struct Assignment {
  std::size_t card = 0;
  double total = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// Maximum-cardinality, then minimum-total-distance matching between `rows`
/// and `cols` on an admissibility matrix (distance < 0 means inadmissible).
inline Assignment best_assignment(const std::vector<std::vector<double>>& dist,
                                  const std::vector<std::size_t>& rows,
                                  const std::vector<std::size_t>& cols) {
  Assignment a;
  if (rows.empty() || cols.empty()) return a;
  const bool transpose = rows.size() > cols.size();
  const auto& r = transpose ? cols : rows;
  const auto& c = transpose ? rows : cols;
  auto d = [&](std::size_t i, std::size_t j) {
    return transpose ? dist[c[j]][r[i]] : dist[r[i]][c[j]];
  };
  double max_d = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j) max_d = std::max(max_d, d(i, j));
  // One more match must always outweigh any total distance.
  const double big = (max_d + 1.0) * static_cast<double>(r.size() + 1);
  std::vector<std::vector<double>> cost(r.size(), std::vector<double>(c.size(), 0.0));
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j)
      if (d(i, j) >= 0.0) cost[i][j] = d(i, j) - big;
  const auto col_of = hungarian(cost);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double dd = d(i, col_of[i]);
    if (dd < 0.0) continue;
    ++a.card;
    a.total += dd;
    if (transpose) a.pairs.emplace_back(c[col_of[i]], r[i]);
    else a.pairs.emplace_back(r[i], c[col_of[i]]);
  }
  return a;
}

inline bool same_quality(const Assignment& a, std::size_t card, double total) {
  return a.card == card && std::abs(a.total - total) <= 1e-9;
}

} // namespace detail

/// One-to-one matching of ground truth against integrated stems. A pair is
/// admissible when the planar distance is <= d_pos and the height difference
/// <= d_h. The matching has maximum cardinality, then minimum total planar
/// distance; remaining ties prefer the lexicographically smallest
/// (gt index, stem index) pairs.
template <typename Stem>
MatchResult match_one_to_one(std::span<const GroundTruthStem> gt, std::span<const Stem> stems,
                             MatchThresholds thresholds = {}) {
  if (!(thresholds.d_pos > 0.0) || !(thresholds.d_h > 0.0))
    throw InvalidArgument("match thresholds must be > 0");
  const std::size_t ng = gt.size(), ns = stems.size();
  // dist[g][s] = planar distance if admissible, else -1.
  std::vector<std::vector<double>> dist(ng, std::vector<double>(ns, -1.0));
  std::vector<std::vector<std::size_t>> adj(ng + ns);
  if (ns > 0) {
    std::vector<Point2> sp;
    sp.reserve(ns);
    for (const auto& s : stems) sp.push_back({s.x, s.y});
    // Bucket stems for the admissibility scan.
    std::vector<Point2> all = sp;
    for (const auto& g : gt) all.push_back({g.x, g.y});
    const GridIndex2D index(all, thresholds.d_pos);
    for (std::size_t g = 0; g < ng; ++g) {
      for (auto j : index.neighbours(ns + g)) {
        if (j >= ns) continue;
        const double d = planar_distance(gt[g].x, gt[g].y, stems[j].x, stems[j].y);
        if (d <= thresholds.d_pos && std::abs(gt[g].height - stems[j].height) <= thresholds.d_h) {
          dist[g][j] = d;
          adj[g].push_back(ng + j);
          adj[ng + j].push_back(g);
        }
      }
    }
  }

  MatchResult result;
  result.thresholds = thresholds;
  std::vector<bool> seen(ng + ns, false);
  for (std::size_t start = 0; start < ng; ++start) {
    if (seen[start] || adj[start].empty()) continue;
    // Connected component of the admissible graph.
    std::vector<std::size_t> rows, cols, stack{start};
    seen[start] = true;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      (v < ng ? rows : cols).push_back(v < ng ? v : v - ng);
      for (auto w : adj[v])
        if (!seen[w]) {
          seen[w] = true;
          stack.push_back(w);
        }
    }
    std::sort(rows.begin(), rows.end());
    std::sort(cols.begin(), cols.end());
    const auto best = detail::best_assignment(dist, rows, cols);

    // Fix pairs greedily in (gt, stem) order while an optimum remains reachable.
    std::size_t card = 0;
    double total = 0.0;
    auto free_rows = rows;
    auto free_cols = cols;
    for (auto g : rows) {
      free_rows.erase(std::find(free_rows.begin(), free_rows.end(), g));
      bool fixed = false;
      for (auto s : free_cols) {
        if (dist[g][s] < 0.0) continue;
        auto rest_cols = free_cols;
        rest_cols.erase(std::find(rest_cols.begin(), rest_cols.end(), s));
        const auto rest = detail::best_assignment(dist, free_rows, rest_cols);
        if (detail::same_quality(best, card + 1 + rest.card, total + dist[g][s] + rest.total)) {
          result.tp_pairs.emplace_back(g, s);
          ++card;
          total += dist[g][s];
          free_cols = std::move(rest_cols);
          fixed = true;
          break;
        }
      }
      (void)fixed;
    }
  }
  std::sort(result.tp_pairs.begin(), result.tp_pairs.end());
  std::vector<bool> gt_hit(ng, false), stem_hit(ns, false);
  for (auto [g, s] : result.tp_pairs) {
    gt_hit[g] = true;
    stem_hit[s] = true;
  }
  for (std::size_t g = 0; g < ng; ++g)
    if (!gt_hit[g]) result.fn_gt.push_back(g);
  for (std::size_t s = 0; s < ns; ++s)
    if (!stem_hit[s]) result.fp_stems.push_back(s);
  return result;
}

template <typename Stem>
MatchResult match_one_to_one(const std::vector<GroundTruthStem>& gt, const std::vector<Stem>& stems,
                             MatchThresholds thresholds = {}) {
  return match_one_to_one(std::span<const GroundTruthStem>(gt), std::span<const Stem>(stems),
                          thresholds);
}

/// Rounds half away from zero at `decimals` places. A 1e-9 nudge absorbs
/// binary representation error of exact decimal halves.
inline double round_half_up(double value, int decimals = 2) {
  const double scale = std::pow(10.0, decimals);
  const double v = std::abs(value) * scale;
  return std::copysign(std::floor(v + 0.5 + 1e-9) / scale, value);
}

struct MetricsReport {
  double recall = 0.0;
  double precision = 0.0;
  double quality = 0.0;

  double recall_pct() const { return round_half_up(100.0 * recall); }
  double precision_pct() const { return round_half_up(100.0 * precision); }
  double quality_pct() const { return round_half_up(100.0 * quality); }
};

/// Recall, precision and their harmonic mean ("quality").
inline MetricsReport metrics(std::size_t tp, std::size_t fn, std::size_t fp) {
  if (tp + fn == 0) throw UndefinedMetric("recall undefined: tp + fn = 0");
  if (tp + fp == 0) throw UndefinedMetric("precision undefined: tp + fp = 0");
  MetricsReport m;
  m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.quality = m.recall + m.precision > 0.0
                  ? 2.0 * m.recall * m.precision / (m.recall + m.precision)
                  : 0.0;
  return m;
}

struct CostReport {
  std::size_t n_tiles = 0;
  std::size_t replication = 0;
  double unit_price = 0.0;
  double fee_rate = 0.0;
  double base_cost = 0.0;
  double total_cost = 0.0;
  double price_per_tp = 0.0;
  double price_per_ha = 0.0;
};

/// Campaign price: every tile is paid `replication` times. Per-TP and
/// per-hectare prices are on the base cost, without the platform fee.
inline CostReport cost_report(std::size_t n_tiles, std::size_t replication, double unit_price,
                              double fee_rate, std::size_t tp, double area_ha) {
  if (n_tiles == 0 || replication == 0)
    throw InvalidArgument("n_tiles and replication must be positive");
  if (!(unit_price >= 0.0) || !(fee_rate >= 0.0))
    throw InvalidArgument("unit_price and fee_rate must be non-negative");
  if (!(area_ha > 0.0)) throw InvalidArgument("area must be positive");
  if (tp == 0) throw UndefinedMetric("price per TP undefined: tp = 0");
  CostReport c;
  c.n_tiles = n_tiles;
  c.replication = replication;
  c.unit_price = unit_price;
  c.fee_rate = fee_rate;
  c.base_cost = static_cast<double>(n_tiles * replication) * unit_price;
  c.total_cost = c.base_cost * (1.0 + fee_rate);
  c.price_per_tp = c.base_cost / static_cast<double>(tp);
  c.price_per_ha = c.base_cost / area_ha;
  return c;
}

/// One row of the evaluation table.
struct EvaluationRow {
  std::string name;
  std::size_t gt = 0;
  std::size_t tp = 0;
  std::size_t fn = 0;
  std::size_t fp = 0;
  MetricsReport metrics;
  std::optional<CostReport> cost;
};

inline EvaluationRow evaluation_row(std::string name, std::size_t gt, std::size_t tp,
                                    std::size_t fn, std::size_t fp,
                                    std::optional<CostReport> cost = std::nullopt) {
  return {std::move(name), gt, tp, fn, fp, metrics(tp, fn, fp), cost};
}

inline std::string format_money(double v) { return fmt::format("{:.2f}", round_half_up(v)); }
inline std::string format_pct(double v) { return fmt::format("{:.2f}", v); }

/// Plain-text table with the columns Data Set, GT, TP, FN, FP, Recall,
/// Precision, Quality, Price per TP and Price per ha.
inline std::string format_table(std::span<const EvaluationRow> rows) {
  std::size_t name_w = std::string("Data Set").size();
  for (const auto& r : rows) name_w = std::max(name_w, r.name.size());
  std::string out;
  auto it = std::back_inserter(out);
  fmt::format_to(it, "{:<{}}  {:>5}  {:>5}  {:>5}  {:>5}  {:>10}  {:>13}  {:>11}  {:>16}  {:>15}\n",
                 "Data Set", name_w, "GT", "TP", "FN", "FP", "Recall [%]", "Precision [%]",
                 "Quality [%]", "Price per TP [$]", "Price per ha [$]");
  for (const auto& r : rows) {
    fmt::format_to(it, "{:<{}}  {:>5}  {:>5}  {:>5}  {:>5}  {:>10}  {:>13}  {:>11}  {:>16}  {:>15}\n",
                   r.name, name_w, r.gt, r.tp, r.fn, r.fp, format_pct(r.metrics.recall_pct()),
                   format_pct(r.metrics.precision_pct()), format_pct(r.metrics.quality_pct()),
                   r.cost ? format_money(r.cost->price_per_tp) : "-",
                   r.cost ? format_money(r.cost->price_per_ha) : "-");
  }
  return out;
}

} // namespace treecrowd

#endif // TREECROWD_EVALUATOR_HPP
