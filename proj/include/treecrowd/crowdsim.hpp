#ifndef TREECROWD_CROWDSIM_HPP
#define TREECROWD_CROWDSIM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "treecrowd/error.hpp"
#include "treecrowd/evaluator.hpp"
#include "treecrowd/integrator.hpp"
#include "treecrowd/tiler.hpp"

namespace treecrowd {

/// Seeded random stream with distributions implemented on top of the
/// standardised mt19937_64 sequence, so results are identical across
/// standard library implementations.
class SimRng {
public:
  explicit SimRng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal (Box-Muller, one variate per call).
  double normal() {
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Poisson variate (Knuth's product method; fine for small means).
  std::size_t poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    const double limit = std::exp(-mean);
    std::size_t k = 0;
    double p = uniform();
    while (p > limit) {
      ++k;
      p *= uniform();
    }
    return k;
  }

  std::size_t index(std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
  }

private:
  std::mt19937_64 engine_;
};

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                 std::uint64_t salt = 0) {
  return splitmix64(seed ^ fnv1a(tag) ^ splitmix64(salt));
}

enum class DishonestMode { coin_flip, always_empty, always_random };

struct WorkerProfile {
  std::string worker_id;
  double sigma_pos = 0.0;
  double sigma_h = 0.0;
  double miss_base = 0.0;
  double miss_proximity_gain = 0.0;  ///< when the nearest other stem is < 2 m away
  double small_tree_miss_gain = 0.0; ///< when height < half the tile's median height
  double fp_rate = 0.0;              ///< mean spurious annotations per tile
  bool dishonest = false;
  DishonestMode dishonest_mode = DishonestMode::coin_flip;
  std::uint64_t rng_seed = 0;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(miss_base) || !prob(miss_proximity_gain) || !prob(small_tree_miss_gain))
      throw InvalidArgument("worker probabilities must be in [0, 1]");
    if (!(sigma_pos >= 0.0) || !(sigma_h >= 0.0))
      throw InvalidArgument("worker sigmas must be >= 0");
    if (!(fp_rate >= 0.0)) throw InvalidArgument("fp_rate must be >= 0");
  }
};

/// The part of a tile a simulated worker needs.
struct TileRegion {
  std::string tile_id;
  Rect bounds;
};

inline TileRegion region_of(const Tile& tile) { return {tile.tile_id, tile.bounds}; }

inline constexpr double kProximityRadius = 2.0;

/// One simulated worker's submission for one tile. `gt_stems` are the stems
/// inside the tile; `clutter` are pole-like decoys (x, y, height) that
/// attract spurious annotations. Deterministic in (rng_seed, tile_id,
/// attempt).
inline Submission simulate_submission(std::span<const GroundTruthStem> gt_stems,
                                      const TileRegion& tile, const WorkerProfile& profile,
                                      std::span<const GroundTruthStem> clutter = {},
                                      std::uint64_t attempt = 0) {
  profile.validate();
  SimRng rng(derive_seed(profile.rng_seed, tile.tile_id, attempt));
  Submission sub;
  sub.worker_id = profile.worker_id;
  sub.tile_id = tile.tile_id;

  double h_lo = 2.0, h_hi = 30.0;
  if (!gt_stems.empty()) {
    auto [lo, hi] = std::minmax_element(gt_stems.begin(), gt_stems.end(),
                                        [](const auto& a, const auto& b) { return a.height < b.height; });
    h_lo = lo->height;
    h_hi = hi->height;
  }
  auto random_annotation = [&] {
    return CylinderAnnotation{rng.uniform(tile.bounds.xmin, tile.bounds.xmax),
                              rng.uniform(tile.bounds.ymin, tile.bounds.ymax),
                              rng.uniform(h_lo, h_hi)};
  };

  if (profile.dishonest) {
    bool empty = profile.dishonest_mode == DishonestMode::always_empty;
    if (profile.dishonest_mode == DishonestMode::coin_flip) empty = rng.uniform() < 0.5;
    if (!empty) {
      const std::size_t n = std::max<std::size_t>(1, gt_stems.size());
      for (std::size_t i = 0; i < n; ++i) sub.annotations.push_back(random_annotation());
    }
    sub.no_stems = sub.annotations.empty();
    return sub;
  }

  double median_h = 0.0;
  if (!gt_stems.empty()) {
    std::vector<double> hs;
    for (const auto& g : gt_stems) hs.push_back(g.height);
    median_h = detail::lower_median(std::move(hs));
  }
  for (std::size_t i = 0; i < gt_stems.size(); ++i) {
    const auto& g = gt_stems[i];
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < gt_stems.size(); ++j)
      if (j != i) nearest = std::min(nearest, planar_distance(g.x, g.y, gt_stems[j].x, gt_stems[j].y));
    double p_miss = profile.miss_base;
    if (nearest < kProximityRadius) p_miss += profile.miss_proximity_gain;
    if (g.height < 0.5 * median_h) p_miss += profile.small_tree_miss_gain;
    p_miss = std::min(1.0, p_miss);
    // Always draw the same variates so noise levels never change counts.
    const double u = rng.uniform();
    const double nx = rng.normal(), ny = rng.normal(), nh = rng.normal();
    if (u < p_miss) continue;
    sub.annotations.push_back({g.x + profile.sigma_pos * nx, g.y + profile.sigma_pos * ny,
                               std::max(0.1, g.height + profile.sigma_h * nh)});
  }

  std::vector<GroundTruthStem> decoys;
  for (const auto& c : clutter)
    if (tile.bounds.contains(c.x, c.y)) decoys.push_back(c);
  const std::size_t n_fp = rng.poisson(profile.fp_rate);
  for (std::size_t i = 0; i < n_fp; ++i) {
    if (!decoys.empty()) {
      const auto& d = decoys[rng.index(decoys.size())];
      const double nx = rng.normal(), ny = rng.normal(), nh = rng.normal();
      sub.annotations.push_back({d.x + profile.sigma_pos * nx, d.y + profile.sigma_pos * ny,
                                 std::max(0.1, d.height + profile.sigma_h * nh)});
    } else {
      sub.annotations.push_back(random_annotation());
    }
  }
  sub.no_stems = sub.annotations.empty();
  return sub;
}

struct CampaignSimConfig {
  std::size_t replication = 10;
  std::uint64_t campaign_seed = 0;
  std::vector<WorkerProfile> workers;
  std::vector<GroundTruthStem> clutter;

  void validate() const {
    if (replication < 1) throw InvalidArgument("replication must be >= 1");
    if (workers.size() < replication)
      throw InvalidArgument(fmt::format("worker pool of {} cannot supply {} distinct workers per tile",
                                        workers.size(), replication));
    for (const auto& w : workers) w.validate();
  }
};

/// A tile together with the ground truth stems inside it.
struct SimTile {
  TileRegion region;
  std::vector<GroundTruthStem> gt;
};

/// Splits ground truth over the plan's tiles using the tiler's membership rule.
inline std::vector<SimTile> assign_to_tiles(std::span<const GroundTruthStem> gt, const TilePlan& plan) {
  std::vector<SimTile> tiles;
  for (std::size_t r = 0; r < plan.n_y; ++r)
    for (std::size_t c = 0; c < plan.n_x; ++c)
      tiles.push_back({{tile_id_for(r, c), plan.tile_bounds(r, c)}, {}});
  for (const auto& g : gt) {
    auto [r, c] = plan.locate(g.x, g.y);
    tiles[r * plan.n_x + c].gt.push_back(g);
  }
  return tiles;
}

/// Every tile receives exactly `replication` submissions from distinct
/// workers, drawn by a per-tile shuffle under the campaign seed.
inline std::vector<Submission> simulate_campaign(std::span<const SimTile> tiles,
                                                 const CampaignSimConfig& config) {
  config.validate();
  std::vector<Submission> out;
  out.reserve(tiles.size() * config.replication);
  for (const auto& t : tiles) {
    std::vector<std::size_t> order(config.workers.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    SimRng rng(derive_seed(config.campaign_seed, t.region.tile_id, 0x5eed));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    order.resize(config.replication);
    std::sort(order.begin(), order.end());
    for (auto w : order)
      out.push_back(simulate_submission(t.gt, t.region, config.workers[w], config.clutter));
  }
  return out;
}

/// Ten honest workers with moderate noise: the default campaign set-up.
inline CampaignSimConfig default_sim_config() {
  CampaignSimConfig c;
  c.replication = 10;
  for (int i = 0; i < 10; ++i) {
    WorkerProfile w;
    w.worker_id = fmt::format("w{:02}", i);
    w.sigma_pos = 0.2;
    w.sigma_h = 1.0;
    w.miss_base = 0.05;
    w.miss_proximity_gain = 0.1;
    w.small_tree_miss_gain = 0.1;
    w.fp_rate = 0.1;
    w.rng_seed = static_cast<std::uint64_t>(1000 + i);
    c.workers.push_back(w);
  }
  return c;
}

// --- config records ------------------------------------------------------------

inline nlohmann::ordered_json to_record(const WorkerProfile& w) {
  nlohmann::ordered_json j;
  j["worker_id"] = w.worker_id;
  j["sigma_pos"] = w.sigma_pos;
  j["sigma_h"] = w.sigma_h;
  j["miss_base"] = w.miss_base;
  j["miss_proximity_gain"] = w.miss_proximity_gain;
  j["small_tree_miss_gain"] = w.small_tree_miss_gain;
  j["fp_rate"] = w.fp_rate;
  j["dishonest"] = w.dishonest;
  j["dishonest_mode"] = w.dishonest_mode == DishonestMode::coin_flip      ? "coin_flip"
                        : w.dishonest_mode == DishonestMode::always_empty ? "always_empty"
                                                                          : "always_random";
  j["rng_seed"] = w.rng_seed;
  return j;
}

inline WorkerProfile worker_from_record(const nlohmann::json& j) {
  WorkerProfile w;
  w.worker_id = j.at("worker_id").get<std::string>();
  w.sigma_pos = j.value("sigma_pos", 0.0);
  w.sigma_h = j.value("sigma_h", 0.0);
  w.miss_base = j.value("miss_base", 0.0);
  w.miss_proximity_gain = j.value("miss_proximity_gain", 0.0);
  w.small_tree_miss_gain = j.value("small_tree_miss_gain", 0.0);
  w.fp_rate = j.value("fp_rate", 0.0);
  w.dishonest = j.value("dishonest", false);
  const auto mode = j.value("dishonest_mode", std::string("coin_flip"));
  if (mode == "coin_flip") w.dishonest_mode = DishonestMode::coin_flip;
  else if (mode == "always_empty") w.dishonest_mode = DishonestMode::always_empty;
  else if (mode == "always_random") w.dishonest_mode = DishonestMode::always_random;
  else throw InvalidArgument("unknown dishonest_mode '" + mode + "'");
  w.rng_seed = j.value("rng_seed", std::uint64_t{0});
  w.validate();
  return w;
}

inline nlohmann::ordered_json to_record(const CampaignSimConfig& c) {
  nlohmann::ordered_json j;
  j["replication"] = c.replication;
  j["campaign_seed"] = c.campaign_seed;
  j["workers"] = nlohmann::ordered_json::array();
  for (const auto& w : c.workers) j["workers"].push_back(to_record(w));
  j["clutter"] = nlohmann::ordered_json::array();
  for (const auto& p : c.clutter)
    j["clutter"].push_back({{"x", p.x}, {"y", p.y}, {"height", p.height}});
  return j;
}

inline CampaignSimConfig sim_config_from_record(const nlohmann::json& j) {
  CampaignSimConfig c;
  c.replication = j.value("replication", std::size_t{10});
  c.campaign_seed = j.value("campaign_seed", std::uint64_t{0});
  if (j.contains("workers"))
    for (const auto& w : j.at("workers")) c.workers.push_back(worker_from_record(w));
  if (j.contains("clutter"))
    for (const auto& p : j.at("clutter"))
      c.clutter.push_back({p.at("x").get<double>(), p.at("y").get<double>(), p.at("height").get<double>()});
  c.validate();
  return c;
}

// --- synthetic sites -----------------------------------------------------------

struct SiteSpec {
  Rect extent{0.0, 0.0, 100.0, 50.0};
  std::size_t n_stems = 100;
  double min_separation = 2.5;
  double height_min = 5.0;
  double height_max = 25.0;
  std::uint64_t seed = 1;
};

/// Stems placed by dart throwing with a minimum pairwise separation.
inline std::vector<GroundTruthStem> synthetic_site(const SiteSpec& spec) {
  SimRng rng(spec.seed);
  std::vector<GroundTruthStem> stems;
  const std::size_t max_tries = spec.n_stems * 10000;
  for (std::size_t tries = 0; stems.size() < spec.n_stems && tries < max_tries; ++tries) {
    GroundTruthStem s{rng.uniform(spec.extent.xmin, spec.extent.xmax),
                      rng.uniform(spec.extent.ymin, spec.extent.ymax),
                      rng.uniform(spec.height_min, spec.height_max)};
    const bool clear = std::all_of(stems.begin(), stems.end(), [&](const GroundTruthStem& o) {
      return planar_distance(s.x, s.y, o.x, o.y) > spec.min_separation;
    });
    if (clear) stems.push_back(s);
  }
  if (stems.size() < spec.n_stems)
    throw InvalidArgument(fmt::format("could only place {} of {} stems", stems.size(), spec.n_stems));
  return stems;
}

} // namespace treecrowd

#endif // TREECROWD_CROWDSIM_HPP
