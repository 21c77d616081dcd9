#ifndef TREECROWD_TILER_HPP
#define TREECROWD_TILER_HPP

#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "treecrowd/error.hpp"
#include "treecrowd/pointcloud.hpp"

namespace treecrowd {

/// Which world axis the long side of a profile strip follows.
enum class StripOrientation { automatic, along_x, along_y };

struct TileSpec {
  double target_length = 60.0;  ///< along the strip
  double target_depth = 10.0;   ///< across the strip
  double stretch_factor = 1.0;  ///< 1.5 for forest scenes
  StripOrientation orientation = StripOrientation::automatic;

  void validate() const {
    if (!(target_length > 0.0)) throw InvalidArgument("target_length must be > 0");
    if (!(target_depth > 0.0)) throw InvalidArgument("target_depth must be > 0");
    if (!(stretch_factor >= 1.0)) throw InvalidArgument("stretch_factor must be >= 1");
  }

  /// The reduced profile used for dense forest: 20 x 4 m, stretched 1.5x.
  static TileSpec forest() { return {20.0, 4.0, 1.5, StripOrientation::automatic}; }
};

/// A congruent rectangular grid over a bounding rectangle.
struct TilePlan {
  Rect extent;
  std::size_t n_x = 1;
  std::size_t n_y = 1;
  double size_x = 0.0;
  double size_y = 0.0;
  bool length_along_x = true;
  double stretch_factor = 1.0;

  std::size_t n_len() const { return length_along_x ? n_x : n_y; }
  std::size_t n_depth() const { return length_along_x ? n_y : n_x; }
  double tile_length() const { return length_along_x ? size_x : size_y; }
  double tile_depth() const { return length_along_x ? size_y : size_x; }
  std::size_t tile_count() const { return n_x * n_y; }

  /// World bounds of tile (row, col); the last tile per axis closes on the
  /// extent's maximum exactly.
  Rect tile_bounds(std::size_t row, std::size_t col) const {
    Rect r;
    r.xmin = extent.xmin + static_cast<double>(col) * size_x;
    r.xmax = col + 1 == n_x ? extent.xmax : extent.xmin + static_cast<double>(col + 1) * size_x;
    r.ymin = extent.ymin + static_cast<double>(row) * size_y;
    r.ymax = row + 1 == n_y ? extent.ymax : extent.ymin + static_cast<double>(row + 1) * size_y;
    return r;
  }

  /// Grid cell of a planar position under half-open membership (last cell
  /// per axis closed). Positions outside the extent clamp to the border cell.
  std::pair<std::size_t, std::size_t> locate(double x, double y) const {
    auto index = [](double v, double lo, double size, std::size_t n) {
      double f = std::floor((v - lo) / size);
      auto i = static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(n - 1)));
      // floor() of a rounded quotient can be off by one at a boundary.
      while (i + 1 < n && v >= lo + static_cast<double>(i + 1) * size) ++i;
      while (i > 0 && v < lo + static_cast<double>(i) * size) --i;
      return i;
    };
    return {index(y, extent.ymin, size_y, n_y), index(x, extent.xmin, size_x, n_x)};
  }
};

/// Grid dimension count for one axis: max(1, round(extent / target)) with
/// exact .5 ties going to the smaller count.
inline std::size_t grid_count(double extent, double target) {
  const double q = extent / target;
  double n = std::floor(q);
  if (q - n > 0.5) n += 1.0;
  return static_cast<std::size_t>(std::max(1.0, n));
}

inline TilePlan plan_grid(const Rect& bbox, const TileSpec& spec) {
  spec.validate();
  if (!(bbox.width() > 0.0) || !(bbox.height() > 0.0))
    throw InvalidArgument("bounding box must have positive extents");
  TilePlan plan;
  plan.extent = bbox;
  plan.stretch_factor = spec.stretch_factor;
  switch (spec.orientation) {
  case StripOrientation::along_x: plan.length_along_x = true; break;
  case StripOrientation::along_y: plan.length_along_x = false; break;
  case StripOrientation::automatic: plan.length_along_x = bbox.width() >= bbox.height(); break;
  }
  const double tx = plan.length_along_x ? spec.target_length : spec.target_depth;
  const double ty = plan.length_along_x ? spec.target_depth : spec.target_length;
  plan.n_x = grid_count(bbox.width(), tx);
  plan.n_y = grid_count(bbox.height(), ty);
  plan.size_x = bbox.width() / static_cast<double>(plan.n_x);
  plan.size_y = bbox.height() / static_cast<double>(plan.n_y);
  return plan;
}

struct Tile {
  std::string tile_id;
  std::size_t row = 0;
  std::size_t col = 0;
  Rect bounds;                 ///< world frame
  double stretch_factor = 1.0;
  PointCloud points;           ///< stretched about (bounds.xmin, bounds.ymin) if factor > 1
  DtmRaster dtm_patch;         ///< world frame

  friend bool operator==(const Tile&, const Tile&) = default;
};

inline std::string tile_id_for(std::size_t row, std::size_t col) {
  return fmt::format("r{:03}_c{:03}", row, col);
}

/// Partitions the cloud over the plan. Tiles are returned row-major, empty
/// tiles included. When a DTM is given every tile gets a patch with a
/// one-node apron.
inline std::vector<Tile> cut_tiles(const PointCloud& cloud, const TilePlan& plan,
                                   const DtmRaster* dtm = nullptr) {
  std::vector<Tile> tiles;
  tiles.reserve(plan.tile_count());
  for (std::size_t r = 0; r < plan.n_y; ++r) {
    for (std::size_t c = 0; c < plan.n_x; ++c) {
      Tile t;
      t.tile_id = tile_id_for(r, c);
      t.row = r;
      t.col = c;
      t.bounds = plan.tile_bounds(r, c);
      if (dtm != nullptr) t.dtm_patch = clip_dtm(*dtm, t.bounds, 1);
      tiles.push_back(std::move(t));
    }
  }
  for (const auto& p : cloud.points) {
    auto [r, c] = plan.locate(p.position.x, p.position.y);
    tiles[r * plan.n_x + c].points.points.push_back(p);
  }
  return tiles;
}

/// Scales x and y about the tile's lower-left corner. Factors compose.
inline Tile apply_stretch(Tile tile, double factor) {
  if (!(factor >= 1.0)) throw InvalidArgument("stretch factor must be >= 1");
  const double x0 = tile.bounds.xmin;
  const double y0 = tile.bounds.ymin;
  for (auto& p : tile.points.points) {
    p.position.x = x0 + factor * (p.position.x - x0);
    p.position.y = y0 + factor * (p.position.y - y0);
  }
  tile.stretch_factor *= factor;
  return tile;
}

/// Maps a world position into the tile's display frame.
inline std::pair<double, double> stretch_position(double x, double y, const Tile& tile) {
  const double f = tile.stretch_factor;
  return {tile.bounds.xmin + f * (x - tile.bounds.xmin),
          tile.bounds.ymin + f * (y - tile.bounds.ymin)};
}

/// Inverse of apply_stretch for a single annotated position.
inline std::pair<double, double> unstretch_annotation(double x, double y, const Tile& tile) {
  const double f = tile.stretch_factor;
  if (!(f >= 1.0)) throw InvalidArgument("tile stretch_factor must be >= 1");
  return {tile.bounds.xmin + (x - tile.bounds.xmin) / f,
          tile.bounds.ymin + (y - tile.bounds.ymin) / f};
}

inline Tile unstretch_tile(Tile tile) {
  for (auto& p : tile.points.points) {
    auto [x, y] = unstretch_annotation(p.position.x, p.position.y, tile);
    p.position.x = x;
    p.position.y = y;
  }
  tile.stretch_factor = 1.0;
  return tile;
}

// --- bundles -----------------------------------------------------------------

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kPointsFile = "points.xyz";
inline constexpr const char* kDtmFile = "dtm.asc";

inline nlohmann::ordered_json tile_manifest(const Tile& tile) {
  nlohmann::ordered_json m;
  m["tile_id"] = tile.tile_id;
  m["bounds"] = {tile.bounds.xmin, tile.bounds.ymin, tile.bounds.xmax, tile.bounds.ymax};
  m["stretch_factor"] = tile.stretch_factor;
  m["point_count"] = tile.points.size();
  m["points_file"] = kPointsFile;
  m["dtm_file"] = kDtmFile;
  m["row"] = tile.row;
  m["col"] = tile.col;
  return m;
}

/// Writes manifest.json, points.xyz and dtm.asc into `directory` (created if
/// missing) and returns the manifest path.
inline std::filesystem::path export_tile_bundle(const Tile& tile,
                                                const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());
  write_cloud(directory / kPointsFile, tile.points, CloudFormat::ascii_xyzrgb);
  if (tile.dtm_patch.n_cols > 0)
    write_dtm(directory / kDtmFile, tile.dtm_patch);
  else
    detail::write_file_atomic(directory / kDtmFile, "");
  const auto manifest = directory / kManifestFile;
  detail::write_file_atomic(manifest, tile_manifest(tile).dump(2) + "\n");
  return manifest;
}

/// Reads a bundle back; accepts the bundle directory or its manifest path.
inline Tile import_tile_bundle(const std::filesystem::path& path) {
  const auto manifest_path =
      std::filesystem::is_directory(path) ? path / kManifestFile : path;
  const auto dir = manifest_path.parent_path();
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(detail::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad manifest: ") + e.what(), 0);
  }
  Tile t;
  try {
    t.tile_id = m.at("tile_id").get<std::string>();
    const auto& b = m.at("bounds");
    t.bounds = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                b.at(3).get<double>()};
    t.stretch_factor = m.at("stretch_factor").get<double>();
    t.row = m.value("row", std::size_t{0});
    t.col = m.value("col", std::size_t{0});
    t.points = read_cloud(dir / m.at("points_file").get<std::string>(),
                          CloudFormat::ascii_xyzrgb);
    const auto dtm_text = detail::read_file(dir / m.at("dtm_file").get<std::string>());
    if (!detail::trim(dtm_text).empty()) t.dtm_patch = parse_dtm(dtm_text);
    if (t.points.size() != m.at("point_count").get<std::size_t>())
      throw ParseError("point_count does not match points file", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad manifest: ") + e.what(), 0);
  }
  return t;
}

} // namespace treecrowd

#endif // TREECROWD_TILER_HPP
