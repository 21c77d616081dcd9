#ifndef TREECROWD_RECORDS_HPP
#define TREECROWD_RECORDS_HPP

// Line-record files: one self-contained JSON object per LF-terminated line.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "treecrowd/error.hpp"
#include "treecrowd/evaluator.hpp"
#include "treecrowd/integrator.hpp"
#include "treecrowd/pointcloud.hpp"

namespace treecrowd {

using ordered_json = nlohmann::ordered_json;

inline ordered_json to_record(const CylinderAnnotation& a) {
  return {{"x", a.x}, {"y", a.y}, {"height", a.height}};
}

inline CylinderAnnotation annotation_from_record(const nlohmann::json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("height").get<double>()};
}

inline ordered_json annotations_to_record(const std::vector<CylinderAnnotation>& list) {
  auto arr = ordered_json::array();
  for (const auto& a : list) arr.push_back(to_record(a));
  return arr;
}

inline std::vector<CylinderAnnotation> annotations_from_record(const nlohmann::json& j) {
  std::vector<CylinderAnnotation> out;
  for (const auto& a : j) out.push_back(annotation_from_record(a));
  return out;
}

inline ordered_json to_record(const Submission& s) {
  ordered_json j;
  j["worker_id"] = s.worker_id;
  j["tile_id"] = s.tile_id;
  j["no_stems"] = s.no_stems;
  j["annotations"] = annotations_to_record(s.annotations);
  j["submitted_at"] = s.submitted_at;
  return j;
}

inline Submission submission_from_record(const nlohmann::json& j) {
  Submission s;
  s.worker_id = j.at("worker_id").get<std::string>();
  s.tile_id = j.at("tile_id").get<std::string>();
  s.no_stems = j.value("no_stems", false);
  if (j.contains("annotations")) s.annotations = annotations_from_record(j.at("annotations"));
  s.submitted_at = j.value("submitted_at", Timestamp{0});
  s.validate();
  return s;
}

inline ordered_json to_record(const IntegratedStem& s) {
  ordered_json j;
  j["x"] = s.x;
  j["y"] = s.y;
  j["height"] = s.height;
  j["support"] = s.support;
  j["source_cluster"] = s.source_cluster;
  j["tile_id"] = s.tile_id;
  j["unsplittable"] = s.unsplittable;
  j["multi_contribution"] = s.multi_contribution;
  return j;
}

inline IntegratedStem stem_from_record(const nlohmann::json& j) {
  IntegratedStem s;
  s.x = j.at("x").get<double>();
  s.y = j.at("y").get<double>();
  s.height = j.at("height").get<double>();
  s.support = j.value("support", std::size_t{0});
  s.source_cluster = j.value("source_cluster", 0);
  s.tile_id = j.value("tile_id", std::string{});
  s.unsplittable = j.value("unsplittable", false);
  s.multi_contribution = j.value("multi_contribution", false);
  return s;
}

inline ordered_json to_record(const GroundTruthStem& g) {
  return {{"x", g.x}, {"y", g.y}, {"height", g.height}};
}

inline GroundTruthStem gt_from_record(const nlohmann::json& j) {
  GroundTruthStem g{j.at("x").get<double>(), j.at("y").get<double>(),
                    j.at("height").get<double>()};
  if (!(g.height > 0.0)) throw InvalidArgument("ground-truth height must be > 0");
  return g;
}

inline ordered_json to_record(const EvaluationRow& r) {
  ordered_json j;
  j["data_set"] = r.name;
  j["gt"] = r.gt;
  j["tp"] = r.tp;
  j["fn"] = r.fn;
  j["fp"] = r.fp;
  j["recall"] = r.metrics.recall;
  j["precision"] = r.metrics.precision;
  j["quality"] = r.metrics.quality;
  if (r.cost) {
    j["n_tiles"] = r.cost->n_tiles;
    j["replication"] = r.cost->replication;
    j["unit_price"] = r.cost->unit_price;
    j["fee_rate"] = r.cost->fee_rate;
    j["base_cost"] = r.cost->base_cost;
    j["total_cost"] = r.cost->total_cost;
    j["price_per_tp"] = r.cost->price_per_tp;
    j["price_per_ha"] = r.cost->price_per_ha;
  }
  return j;
}

inline EvaluationRow evaluation_from_record(const nlohmann::json& j) {
  EvaluationRow r;
  r.name = j.at("data_set").get<std::string>();
  r.gt = j.at("gt").get<std::size_t>();
  r.tp = j.at("tp").get<std::size_t>();
  r.fn = j.at("fn").get<std::size_t>();
  r.fp = j.at("fp").get<std::size_t>();
  r.metrics = metrics(r.tp, r.fn, r.fp);
  if (j.contains("price_per_tp")) {
    CostReport c;
    c.n_tiles = j.at("n_tiles").get<std::size_t>();
    c.replication = j.at("replication").get<std::size_t>();
    c.unit_price = j.at("unit_price").get<double>();
    c.fee_rate = j.at("fee_rate").get<double>();
    c.base_cost = j.at("base_cost").get<double>();
    c.total_cost = j.at("total_cost").get<double>();
    c.price_per_tp = j.at("price_per_tp").get<double>();
    c.price_per_ha = j.at("price_per_ha").get<double>();
    r.cost = c;
  }
  return r;
}

/// Parses every non-blank line as a JSON object.
inline std::vector<nlohmann::json> parse_line_records(std::string_view text) {
  std::vector<nlohmann::json> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = detail::trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw ParseError("record is not an object", line_no);
      out.push_back(std::move(j));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

template <typename T, typename Convert>
std::vector<T> read_records(const std::filesystem::path& path, Convert convert) {
  std::vector<T> out;
  std::size_t n = 0;
  for (const auto& j : parse_line_records(detail::read_file(path))) {
    ++n;
    try {
      out.push_back(convert(j));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), n);
    }
  }
  return out;
}

template <typename T>
std::string format_records(const std::vector<T>& items) {
  std::string out;
  for (const auto& item : items) {
    out += to_record(item).dump();
    out.push_back('\n');
  }
  return out;
}

template <typename T>
void write_records(const std::filesystem::path& path, const std::vector<T>& items) {
  detail::write_file_atomic(path, format_records(items));
}

inline std::vector<Submission> read_submissions(const std::filesystem::path& path) {
  return read_records<Submission>(path, submission_from_record);
}
inline std::vector<IntegratedStem> read_stems(const std::filesystem::path& path) {
  return read_records<IntegratedStem>(path, stem_from_record);
}
inline std::vector<GroundTruthStem> read_ground_truth(const std::filesystem::path& path) {
  return read_records<GroundTruthStem>(path, gt_from_record);
}

} // namespace treecrowd

#endif // TREECROWD_RECORDS_HPP
