#ifndef TREECROWD_POINTCLOUD_HPP
#define TREECROWD_POINTCLOUD_HPP

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <fmt/format.h>

#include "treecrowd/error.hpp"

namespace treecrowd {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct ColoredPoint {
  Point3 position;
  Rgb color;

  friend bool operator==(const ColoredPoint&, const ColoredPoint&) = default;
};

/// Axis-aligned planar rectangle [xmin, xmax] x [ymin, ymax].
struct Rect {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  bool contains(double x, double y) const {
    return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
  }

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Axis-aligned 3D bounds. A default-constructed box is the empty sentinel
/// (min = +inf, max = -inf).
struct Bounds3 {
  Point3 min{std::numeric_limits<double>::infinity(),
             std::numeric_limits<double>::infinity(),
             std::numeric_limits<double>::infinity()};
  Point3 max{-std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity()};

  bool empty() const { return min.x > max.x; }

  void extend(const Point3& p) {
    min.x = std::min(min.x, p.x);
    min.y = std::min(min.y, p.y);
    min.z = std::min(min.z, p.z);
    max.x = std::max(max.x, p.x);
    max.y = std::max(max.y, p.y);
    max.z = std::max(max.z, p.z);
  }

  Rect planar() const { return {min.x, min.y, max.x, max.y}; }

  friend bool operator==(const Bounds3&, const Bounds3&) = default;
};

/// Ordered point list. Index is identity: every operation that drops points
/// keeps the survivors in input order.
struct PointCloud {
  std::vector<ColoredPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  Bounds3 bbox() const {
    Bounds3 b;
    for (const auto& p : points) b.extend(p.position);
    return b;
  }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

/// 2.5D terrain grid. Node (col, row) sits at
/// (origin_x + col * cell_size, origin_y + row * cell_size); row 0 is the
/// southernmost row.
struct DtmRaster {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_size = 1.0;
  std::size_t n_cols = 0;
  std::size_t n_rows = 0;
  std::vector<double> elevations; // row-major, n_rows * n_cols

  double at(std::size_t col, std::size_t row) const {
    return elevations[row * n_cols + col];
  }
  double& at(std::size_t col, std::size_t row) {
    return elevations[row * n_cols + col];
  }

  double node_x(std::size_t col) const {
    return origin_x + static_cast<double>(col) * cell_size;
  }
  double node_y(std::size_t row) const {
    return origin_y + static_cast<double>(row) * cell_size;
  }

  /// Rectangle spanned by the grid nodes.
  Rect node_hull() const {
    return {origin_x, origin_y, node_x(n_cols - 1), node_y(n_rows - 1)};
  }

  friend bool operator==(const DtmRaster&, const DtmRaster&) = default;
};

struct ViewParams {
  double detail_radius = 5.0;
  double ground_mask_fraction = 0.05;
  double color_h_min = 0.0;
  double color_h_max = 30.0;

  void validate() const {
    if (!(detail_radius > 0.0))
      throw InvalidArgument("detail_radius must be > 0");
    if (!(ground_mask_fraction >= 0.0 && ground_mask_fraction < 1.0))
      throw InvalidArgument("ground_mask_fraction must be in [0, 1)");
    if (!(color_h_min < color_h_max))
      throw InvalidArgument("color_h_min must be < color_h_max");
  }
};

enum class CloudFormat { ascii_xyz, ascii_xyzrgb };

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end && std::isfinite(out);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a sibling temporary file and rename, so readers never observe a
/// partially written file.
inline void write_file_atomic(const std::filesystem::path& path,
                              std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

} // namespace detail

// --- ASCII cloud I/O -------------------------------------------------------

/// Parses the ASCII cloud format: `x y z [r g b]` per line, `#` comments.
inline PointCloud parse_cloud(std::string_view text, CloudFormat format) {
  const std::size_t expected = format == CloudFormat::ascii_xyz ? 3 : 6;
  PointCloud cloud;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = detail::trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto fields = detail::split_ws(line);
    if (fields.size() != expected)
      throw ParseError(fmt::format("expected {} fields, got {}", expected,
                                   fields.size()),
                       line_no);
    std::array<double, 6> v{};
    for (std::size_t i = 0; i < expected; ++i) {
      if (!detail::parse_double(fields[i], v[i]))
        throw ParseError("malformed number '" + std::string(fields[i]) + "'",
                         line_no);
    }
    ColoredPoint p{{v[0], v[1], v[2]}, {}};
    if (expected == 6) {
      for (std::size_t i = 3; i < 6; ++i) {
        if (v[i] < 0.0 || v[i] > 255.0 || v[i] != std::floor(v[i]))
          throw ParseError("color channel out of range", line_no);
      }
      p.color = {static_cast<std::uint8_t>(v[3]),
                 static_cast<std::uint8_t>(v[4]),
                 static_cast<std::uint8_t>(v[5])};
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

inline PointCloud read_cloud(const std::filesystem::path& path,
                             CloudFormat format) {
  return parse_cloud(detail::read_file(path), format);
}

/// Renders the cloud with 6 decimal places (micrometre precision).
inline std::string format_cloud(const PointCloud& cloud, CloudFormat format) {
  std::string out;
  out.reserve(cloud.size() * 48);
  for (const auto& p : cloud.points) {
    const auto& q = p.position;
    if (format == CloudFormat::ascii_xyz) {
      fmt::format_to(std::back_inserter(out), "{:.6f} {:.6f} {:.6f}\n", q.x,
                     q.y, q.z);
    } else {
      fmt::format_to(std::back_inserter(out), "{:.6f} {:.6f} {:.6f} {} {} {}\n",
                     q.x, q.y, q.z, p.color.r, p.color.g, p.color.b);
    }
  }
  return out;
}

inline void write_cloud(const std::filesystem::path& path,
                        const PointCloud& cloud, CloudFormat format) {
  detail::write_file_atomic(path, format_cloud(cloud, format));
}

// --- DTM ---------------------------------------------------------------------

namespace detail {

/// Replaces NODATA cells by the value of the Euclidean-nearest valid cell
/// (ties: lowest row, then lowest column).
inline void fill_nodata(DtmRaster& dtm, const std::vector<bool>& valid) {
  const auto cols = static_cast<long>(dtm.n_cols);
  const auto rows = static_cast<long>(dtm.n_rows);
  if (std::none_of(valid.begin(), valid.end(), [](bool v) { return v; }))
    throw ParseError("DTM contains only NODATA cells", 0);
  const auto source = dtm.elevations;
  const long max_r = std::max(cols, rows);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      if (valid[r * cols + c]) continue;
      long best_d2 = std::numeric_limits<long>::max();
      long best_idx = -1;
      // Ring search; a hit at Chebyshev radius k can still be beaten by a
      // cell up to radius ceil(k * sqrt(2)).
      long stop = max_r;
      for (long k = 1; k <= std::min(stop, max_r); ++k) {
        for (long rr = r - k; rr <= r + k; ++rr) {
          if (rr < 0 || rr >= rows) continue;
          for (long cc = c - k; cc <= c + k; ++cc) {
            if (cc < 0 || cc >= cols) continue;
            if (std::max(std::labs(rr - r), std::labs(cc - c)) != k) continue;
            if (!valid[rr * cols + cc]) continue;
            const long d2 = (rr - r) * (rr - r) + (cc - c) * (cc - c);
            const long idx = rr * cols + cc;
            if (d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
              best_d2 = d2;
              best_idx = idx;
            }
          }
        }
        if (best_idx >= 0 && stop == max_r)
          stop = static_cast<long>(std::ceil(k * std::sqrt(2.0)));
      }
      dtm.elevations[r * cols + c] = source[best_idx];
    }
  }
}

} // namespace detail

/// Parses an ESRI ASCII grid. The file is north-up; the raster stores row 0 as
/// the southern row. Nodes sit at cell centres.
inline DtmRaster parse_dtm(std::string_view text) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::optional<std::string_view> {
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      auto line = detail::trim(text.substr(pos, nl - pos));
      pos = nl + 1;
      ++line_no;
      if (!line.empty()) return line;
    }
    return std::nullopt;
  };

  double ncols = -1, nrows = -1, xll = NAN, yll = NAN, cell = NAN;
  bool center = false;
  double nodata = -9999.0;
  std::vector<double> values;
  while (auto line = next_line()) {
    auto fields = detail::split_ws(*line);
    std::string key(fields[0]);
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char ch) { return std::tolower(ch); });
    const bool is_header = !key.empty() && std::isalpha(static_cast<unsigned char>(key[0]));
    if (!is_header) {
      for (auto f : fields) {
        double v;
        if (!detail::parse_double(f, v))
          throw ParseError("malformed DTM value '" + std::string(f) + "'", line_no);
        values.push_back(v);
      }
      continue;
    }
    if (!values.empty()) throw ParseError("header after data", line_no);
    if (fields.size() != 2) throw ParseError("malformed header line", line_no);
    double v;
    if (!detail::parse_double(fields[1], v))
      throw ParseError("malformed header value", line_no);
    if (key == "ncols") ncols = v;
    else if (key == "nrows") nrows = v;
    else if (key == "xllcorner") xll = v;
    else if (key == "yllcorner") yll = v;
    else if (key == "xllcenter") { xll = v; center = true; }
    else if (key == "yllcenter") { yll = v; center = true; }
    else if (key == "cellsize") cell = v;
    else if (key == "nodata_value") nodata = v;
    else throw ParseError("unknown header key '" + key + "'", line_no);
  }
  if (ncols < 1 || nrows < 1 || ncols != std::floor(ncols) ||
      nrows != std::floor(nrows) || std::isnan(xll) || std::isnan(yll) ||
      !(cell > 0.0))
    throw ParseError("incomplete or invalid DTM header", line_no);

  DtmRaster dtm;
  dtm.n_cols = static_cast<std::size_t>(ncols);
  dtm.n_rows = static_cast<std::size_t>(nrows);
  dtm.cell_size = cell;
  dtm.origin_x = center ? xll : xll + cell / 2.0;
  dtm.origin_y = center ? yll : yll + cell / 2.0;
  if (values.size() != dtm.n_cols * dtm.n_rows)
    throw ParseError(fmt::format("expected {} DTM values, got {}",
                                 dtm.n_cols * dtm.n_rows, values.size()),
                     line_no);
  dtm.elevations.resize(values.size());
  std::vector<bool> valid(values.size());
  for (std::size_t fr = 0; fr < dtm.n_rows; ++fr) {
    const std::size_t row = dtm.n_rows - 1 - fr;
    for (std::size_t c = 0; c < dtm.n_cols; ++c) {
      const double v = values[fr * dtm.n_cols + c];
      dtm.at(c, row) = v;
      valid[row * dtm.n_cols + c] = v != nodata;
    }
  }
  if (std::find(valid.begin(), valid.end(), false) != valid.end())
    detail::fill_nodata(dtm, valid);
  return dtm;
}

inline DtmRaster read_dtm(const std::filesystem::path& path) {
  return parse_dtm(detail::read_file(path));
}

inline std::string format_dtm(const DtmRaster& dtm) {
  std::string out;
  auto it = std::back_inserter(out);
  fmt::format_to(it, "ncols {}\nnrows {}\n", dtm.n_cols, dtm.n_rows);
  fmt::format_to(it, "xllcenter {}\nyllcenter {}\ncellsize {}\n", dtm.origin_x,
                 dtm.origin_y, dtm.cell_size);
  fmt::format_to(it, "NODATA_value -9999\n");
  for (std::size_t fr = 0; fr < dtm.n_rows; ++fr) {
    const std::size_t row = dtm.n_rows - 1 - fr;
    for (std::size_t c = 0; c < dtm.n_cols; ++c)
    {
      if (c > 0) out.push_back(' ');
      fmt::format_to(it, "{:.6f}", dtm.at(c, row));
    }
    out.push_back('\n');
  }
  return out;
}

inline void write_dtm(const std::filesystem::path& path, const DtmRaster& dtm) {
  detail::write_file_atomic(path, format_dtm(dtm));
}

/// Bilinear interpolation of the four grid nodes surrounding (x, y).
inline double dtm_elevation(const DtmRaster& dtm, double x, double y) {
  if (dtm.n_cols == 0 || dtm.n_rows == 0)
    throw OutOfCoverage("empty DTM");
  const Rect hull = dtm.node_hull();
  if (!hull.contains(x, y))
    throw OutOfCoverage(fmt::format("({}, {}) outside DTM node hull", x, y));
  const double fx = (x - dtm.origin_x) / dtm.cell_size;
  const double fy = (y - dtm.origin_y) / dtm.cell_size;
  auto c0 = static_cast<std::size_t>(std::floor(fx));
  auto r0 = static_cast<std::size_t>(std::floor(fy));
  c0 = std::min(c0, dtm.n_cols > 1 ? dtm.n_cols - 2 : 0);
  r0 = std::min(r0, dtm.n_rows > 1 ? dtm.n_rows - 2 : 0);
  const std::size_t c1 = std::min(c0 + 1, dtm.n_cols - 1);
  const std::size_t r1 = std::min(r0 + 1, dtm.n_rows - 1);
  const double tx = std::clamp(fx - static_cast<double>(c0), 0.0, 1.0);
  const double ty = std::clamp(fy - static_cast<double>(r0), 0.0, 1.0);
  const double z00 = dtm.at(c0, r0);
  const double z10 = dtm.at(c1, r0);
  const double z01 = dtm.at(c0, r1);
  const double z11 = dtm.at(c1, r1);
  if (tx == 0.0 && ty == 0.0) return z00;
  return (1 - tx) * (1 - ty) * z00 + tx * (1 - ty) * z10 +
         (1 - tx) * ty * z01 + tx * ty * z11;
}

/// Clips the raster to the nodes needed to cover `bounds`, plus `apron`
/// extra nodes on each side (clamped to the raster).
inline DtmRaster clip_dtm(const DtmRaster& dtm, const Rect& bounds,
                          std::size_t apron = 1) {
  auto index_lo = [&](double v, double origin, std::size_t n) {
    const double f = std::floor((v - origin) / dtm.cell_size) -
                     static_cast<double>(apron);
    return static_cast<std::size_t>(
        std::clamp(f, 0.0, static_cast<double>(n - 1)));
  };
  auto index_hi = [&](double v, double origin, std::size_t n) {
    const double f = std::ceil((v - origin) / dtm.cell_size) +
                     static_cast<double>(apron);
    return static_cast<std::size_t>(
        std::clamp(f, 0.0, static_cast<double>(n - 1)));
  };
  const auto c0 = index_lo(bounds.xmin, dtm.origin_x, dtm.n_cols);
  const auto c1 = index_hi(bounds.xmax, dtm.origin_x, dtm.n_cols);
  const auto r0 = index_lo(bounds.ymin, dtm.origin_y, dtm.n_rows);
  const auto r1 = index_hi(bounds.ymax, dtm.origin_y, dtm.n_rows);
  DtmRaster out;
  out.cell_size = dtm.cell_size;
  out.origin_x = dtm.node_x(c0);
  out.origin_y = dtm.node_y(r0);
  out.n_cols = c1 - c0 + 1;
  out.n_rows = r1 - r0 + 1;
  out.elevations.reserve(out.n_cols * out.n_rows);
  for (std::size_t r = r0; r <= r1; ++r)
    for (std::size_t c = c0; c <= c1; ++c) out.elevations.push_back(dtm.at(c, r));
  return out;
}

// --- cloud operations ------------------------------------------------------

/// Keeps one point per occupied voxel (grid aligned to multiples of
/// `spacing`): the point nearest the mean of the voxel's points, lowest input
/// index on ties. Output is in input order.
inline PointCloud voxel_subsample(const PointCloud& cloud, double spacing = 0.20) {
  if (!(spacing > 0.0)) throw InvalidArgument("spacing must be > 0");
  struct Key {
    std::int64_t i, j, k;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& key) const noexcept {
      std::uint64_t h = static_cast<std::uint64_t>(key.i) * 0x9E3779B97F4A7C15ULL;
      h ^= static_cast<std::uint64_t>(key.j) + 0x7F4A7C159E3779B9ULL + (h << 6) + (h >> 2);
      h ^= static_cast<std::uint64_t>(key.k) + 0x94D049BB133111EBULL + (h << 6) + (h >> 2);
      return static_cast<std::size_t>(h);
    }
  };
  const auto& pts = cloud.points;
  std::unordered_map<Key, std::size_t, KeyHash> voxel_of;
  std::vector<std::size_t> voxel(pts.size());
  std::vector<Point3> sum;
  std::vector<std::size_t> count;
  for (std::size_t n = 0; n < pts.size(); ++n) {
    const auto& p = pts[n].position;
    Key key{static_cast<std::int64_t>(std::floor(p.x / spacing)),
            static_cast<std::int64_t>(std::floor(p.y / spacing)),
            static_cast<std::int64_t>(std::floor(p.z / spacing))};
    auto [it, inserted] = voxel_of.try_emplace(key, sum.size());
    if (inserted) {
      sum.push_back({});
      count.push_back(0);
    }
    voxel[n] = it->second;
    sum[it->second].x += p.x;
    sum[it->second].y += p.y;
    sum[it->second].z += p.z;
    ++count[it->second];
  }
  constexpr auto npos = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best(sum.size(), npos);
  std::vector<double> best_d2(sum.size());
  for (std::size_t n = 0; n < pts.size(); ++n) {
    const auto v = voxel[n];
    const double c = static_cast<double>(count[v]);
    const auto& p = pts[n].position;
    const double dx = p.x - sum[v].x / c;
    const double dy = p.y - sum[v].y / c;
    const double dz = p.z - sum[v].z / c;
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (best[v] == npos || d2 < best_d2[v]) {
      best[v] = n;
      best_d2[v] = d2;
    }
  }
  std::sort(best.begin(), best.end());
  PointCloud out;
  out.points.reserve(best.size());
  for (auto n : best) out.points.push_back(pts[n]);
  return out;
}

/// Height of every point above the interpolated terrain.
inline std::vector<double> height_above_ground(const PointCloud& cloud,
                                               const DtmRaster& dtm) {
  std::vector<double> h;
  h.reserve(cloud.size());
  std::vector<std::size_t> outside;
  const Rect hull = dtm.node_hull();
  for (std::size_t n = 0; n < cloud.size(); ++n) {
    const auto& p = cloud.points[n].position;
    if (dtm.n_cols == 0 || !hull.contains(p.x, p.y)) {
      outside.push_back(n);
      h.push_back(0.0);
      continue;
    }
    h.push_back(p.z - dtm_elevation(dtm, p.x, p.y));
  }
  if (!outside.empty()) {
    std::string list;
    for (std::size_t i = 0; i < std::min<std::size_t>(outside.size(), 10); ++i)
      list += (i ? ", " : "") + std::to_string(outside[i]);
    if (outside.size() > 10) list += ", ...";
    throw OutOfCoverage(fmt::format("{} point(s) outside DTM coverage: {}",
                                    outside.size(), list),
                        std::move(outside));
  }
  return h;
}

/// Blue (low) -> green -> red (high) ramp over [color_h_min, color_h_max].
inline Rgb colorize_by_height(double h, const ViewParams& params = {}) {
  double t = (h - params.color_h_min) / (params.color_h_max - params.color_h_min);
  if (std::isnan(t)) t = 0.0;
  t = std::clamp(t, 0.0, 1.0);
  auto channel = [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
  };
  if (t <= 0.5) {
    const double s = 2.0 * t;
    return {0, channel(255.0 * s), channel(255.0 * (1.0 - s))};
  }
  const double s = 2.0 * t - 1.0;
  return {channel(255.0 * s), channel(255.0 * (1.0 - s)), 0};
}

/// Assigns height-above-ground colours to every point.
inline PointCloud colorize(PointCloud cloud, std::span<const double> heights,
                           const ViewParams& params = {}) {
  if (heights.size() != cloud.size())
    throw InvalidArgument("heights must parallel the cloud");
  for (std::size_t n = 0; n < cloud.size(); ++n)
    cloud.points[n].color = colorize_by_height(heights[n], params);
  return cloud;
}

/// Points within planar distance `radius` (inclusive) of the centre.
inline PointCloud crop_cylinder(const PointCloud& cloud, double center_x,
                                double center_y, double radius = 5.0) {
  if (!(radius > 0.0)) throw InvalidArgument("radius must be > 0");
  PointCloud out;
  const double r2 = radius * radius;
  for (const auto& p : cloud.points) {
    const double dx = p.position.x - center_x;
    const double dy = p.position.y - center_y;
    if (dx * dx + dy * dy <= r2) out.points.push_back(p);
  }
  return out;
}

/// Drops the floor(n * fraction) lowest points (lowest index first on equal z).
inline PointCloud mask_lowest_fraction(const PointCloud& cloud,
                                       double fraction = 0.05) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw InvalidArgument("fraction must be in [0, 1)");
  const auto n = cloud.size();
  const auto drop = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * fraction + 1e-9));
  if (drop == 0) return cloud;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cloud.points[a].position.z < cloud.points[b].position.z;
  });
  std::vector<bool> removed(n, false);
  for (std::size_t i = 0; i < drop; ++i) removed[order[i]] = true;
  PointCloud out;
  out.points.reserve(n - drop);
  for (std::size_t i = 0; i < n; ++i)
    if (!removed[i]) out.points.push_back(cloud.points[i]);
  return out;
}

/// The detail view around a stem: crop, then mask the ground.
inline PointCloud detail_view(const PointCloud& cloud, double center_x,
                              double center_y, const ViewParams& params = {}) {
  return mask_lowest_fraction(
      crop_cylinder(cloud, center_x, center_y, params.detail_radius),
      params.ground_mask_fraction);
}

} // namespace treecrowd

#endif // TREECROWD_POINTCLOUD_HPP
