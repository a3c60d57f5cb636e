#pragma once

/// @file io.hpp
/// COCO annotation / results JSON, report CSVs, atomic file output.
///
/// Pyramid detection dumps are COCO results records with two extra fields:
/// "omega" (the scaling factor of the image the box was predicted on, with
/// the box in that resized image's coordinates) and "resolution_index".
/// Records without "omega" are plain results in original-image coordinates.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "isn/core.hpp"
#include "isn/dataset.hpp"
#include "isn/eval.hpp"
#include "isn/fusion.hpp"
#include "isn/pyramid_analysis.hpp"
#include "isn/sampling.hpp"
#include "isn/search.hpp"
#include "isn/sim.hpp"

namespace isn {

using json = nlohmann::ordered_json;

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Scalars

/// Shortest round-trip decimal form.
inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Numbers, or the string "inf" / null for +infinity.
inline double bound_from_json(const json& j, const std::string& where) {
  if (j.is_null()) return kInf;
  if (j.is_string() && (j.get<std::string>() == "inf" || j.get<std::string>() == "+inf")) {
    return kInf;
  }
  if (!j.is_number()) throw ParseError(where + ": expected a number or \"inf\"");
  return j.get<double>();
}

inline json bound_to_json(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

inline ScaleRange range_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw ParseError(where + ": expected [lower, upper]");
  try {
    return {bound_from_json(j[0], where), bound_from_json(j[1], where)};
  } catch (const InvariantError& e) {
    throw ParseError(where + ": " + e.what());
  }
}

inline json range_to_json(const ScaleRange& r) {
  return json::array({bound_to_json(r.lower()), bound_to_json(r.upper())});
}

/// "16,560" or "16,inf".
inline ScaleRange parse_range_arg(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ParseError("range '" + text + "': expected lo,hi");
  auto num = [&](std::string s) {
    if (s == "inf" || s == "+inf") return kInf;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw ParseError("range '" + text + "': bad number");
    return v;
  };
  try {
    return {num(text.substr(0, comma)), num(text.substr(comma + 1))};
  } catch (const InvariantError& e) {
    throw ParseError(std::string("range '") + text + "': " + e.what());
  }
}

inline std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      throw ParseError("number list '" + text + "': bad entry '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ParseError("number list is empty");
  return out;
}

// ---------------------------------------------------------------------------
// Files

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": malformed JSON: " + e.what());
  }
}

/// Writes to a sibling temporary then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path.string() + ": cannot write");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error(path.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// COCO annotations

namespace detail {

inline const json& field(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing field '" + key + "'");
  return *it;
}

inline std::int64_t int_field(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number_integer()) {
    throw ParseError(where + ": field '" + key + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

inline BBox bbox_field(const json& obj, const std::string& where) {
  const json& b = field(obj, "bbox", where);
  if (!b.is_array() || b.size() != 4) {
    throw ParseError(where + ": bbox must be [x, y, w, h]");
  }
  for (const auto& v : b) {
    if (!v.is_number()) throw ParseError(where + ": bbox entries must be numbers");
  }
  try {
    return {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  } catch (const InvariantError& e) {
    throw ParseError(where + ": " + e.what());
  }
}

inline json bbox_to_json(const BBox& b) { return json::array({b.x(), b.y(), b.w(), b.h()}); }

}  // namespace detail

/// Validates and loads a COCO-style annotation document.
inline Dataset parse_annotations(const json& doc) {
  if (!doc.is_object()) throw ParseError("annotations: top level must be an object");
  Dataset ds;
  const json& images = detail::field(doc, "images", "annotations");
  if (!images.is_array()) throw ParseError("annotations: 'images' must be an array");
  std::set<std::int64_t> image_ids;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const json& im = images[i];
    std::string where = "image #" + std::to_string(i);
    if (!im.is_object()) throw ParseError(where + ": must be an object");
    ImageInfo info;
    info.id = detail::int_field(im, "id", where);
    where = "image " + std::to_string(info.id);
    info.height = detail::int_field(im, "height", where);
    info.width = detail::int_field(im, "width", where);
    if (info.height < 1 || info.width < 1) throw ParseError(where + ": non-positive size");
    if (const auto it = im.find("file_name"); it != im.end() && it->is_string()) {
      info.file_name = it->get<std::string>();
    }
    if (!image_ids.insert(info.id).second) throw ParseError(where + ": duplicate id");
    ds.images.push_back(std::move(info));
  }

  std::set<std::int64_t> category_ids;
  if (const auto it = doc.find("categories"); it != doc.end()) {
    if (!it->is_array()) throw ParseError("annotations: 'categories' must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& c = (*it)[i];
      std::string where = "category #" + std::to_string(i);
      if (!c.is_object()) throw ParseError(where + ": must be an object");
      Category cat;
      cat.id = detail::int_field(c, "id", where);
      where = "category " + std::to_string(cat.id);
      if (const auto n = c.find("name"); n != c.end() && n->is_string()) {
        cat.name = n->get<std::string>();
      }
      if (!category_ids.insert(cat.id).second) throw ParseError(where + ": duplicate id");
      ds.categories.push_back(std::move(cat));
    }
  }

  const json& anns = detail::field(doc, "annotations", "annotations");
  if (!anns.is_array()) throw ParseError("annotations: 'annotations' must be an array");
  std::set<std::int64_t> ann_ids;
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const json& a = anns[i];
    std::string where = "annotation #" + std::to_string(i);
    if (!a.is_object()) throw ParseError(where + ": must be an object");
    const std::int64_t id = detail::int_field(a, "id", where);
    where = "annotation " + std::to_string(id);
    if (!ann_ids.insert(id).second) throw ParseError(where + ": duplicate id");
    const std::int64_t image_id = detail::int_field(a, "image_id", where);
    if (!image_ids.contains(image_id)) {
      throw ParseError(where + ": references missing image " + std::to_string(image_id));
    }
    const std::int64_t category_id = detail::int_field(a, "category_id", where);
    if (category_id < 1) throw ParseError(where + ": category_id must be >= 1");
    if (!category_ids.empty() && !category_ids.contains(category_id)) {
      throw ParseError(where + ": references missing category " +
                       std::to_string(category_id));
    }
    bool crowd = false;
    if (const auto c = a.find("iscrowd"); c != a.end()) {
      if (c->is_boolean()) {
        crowd = c->get<bool>();
      } else if (c->is_number_integer()) {
        crowd = c->get<std::int64_t>() != 0;
      } else {
        throw ParseError(where + ": iscrowd must be 0/1");
      }
    }
    ds.instances.push_back({detail::bbox_field(a, where), category_id, crowd, id, image_id});
  }

  if (category_ids.empty()) {
    std::set<std::int64_t> seen;
    for (const auto& inst : ds.instances) seen.insert(inst.category_id);
    for (auto id : seen) ds.categories.push_back({id, ""});
  }
  return ds;
}

inline Dataset ingest_annotations(const std::filesystem::path& path) {
  try {
    return parse_annotations(read_json_file(path));
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path.string(), 0) == 0) throw;
    throw ParseError(path.string() + ": " + msg);
  }
}

inline json annotations_to_json(const Dataset& ds) {
  json images = json::array();
  for (const auto& im : ds.images) {
    json j;
    j["id"] = im.id;
    j["height"] = im.height;
    j["width"] = im.width;
    if (!im.file_name.empty()) j["file_name"] = im.file_name;
    images.push_back(std::move(j));
  }
  json anns = json::array();
  for (const auto& inst : ds.instances) {
    json j;
    j["id"] = inst.id;
    j["image_id"] = inst.image_id;
    j["category_id"] = inst.category_id;
    j["bbox"] = detail::bbox_to_json(inst.bbox);
    j["area"] = inst.bbox.area();
    j["iscrowd"] = inst.iscrowd ? 1 : 0;
    anns.push_back(std::move(j));
  }
  json cats = json::array();
  for (const auto& c : ds.categories) cats.push_back({{"id", c.id}, {"name", c.name}});
  json doc;
  doc["images"] = std::move(images);
  doc["annotations"] = std::move(anns);
  doc["categories"] = std::move(cats);
  return doc;
}

// ---------------------------------------------------------------------------
// Detections

struct TaggedDetection {
  Detection detection;
  /// Set for pyramid dumps; the box is then in resized coordinates.
  std::optional<double> omega;
};

inline std::vector<TaggedDetection> parse_detections(const json& doc) {
  if (!doc.is_array()) throw ParseError("detections: top level must be an array");
  std::vector<TaggedDetection> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& r = doc[i];
    const std::string where = "detection #" + std::to_string(i);
    if (!r.is_object()) throw ParseError(where + ": must be an object");
    TaggedDetection t{Detection{detail::bbox_field(r, where), 0, 0.0, -1, 0}, std::nullopt};
    t.detection.image_id = detail::int_field(r, "image_id", where);
    t.detection.category_id = detail::int_field(r, "category_id", where);
    const json& s = detail::field(r, "score", where);
    if (!s.is_number()) throw ParseError(where + ": score must be a number");
    t.detection.score = s.get<double>();
    try {
      check_score(t.detection.score);
    } catch (const InvariantError& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (const auto it = r.find("resolution_index"); it != r.end()) {
      if (!it->is_number_integer()) throw ParseError(where + ": resolution_index must be an integer");
      t.detection.resolution_index = it->get<int>();
    }
    if (const auto it = r.find("omega"); it != r.end()) {
      if (!it->is_number() || !(it->get<double>() > 0.0)) {
        throw ParseError(where + ": omega must be a positive number");
      }
      t.omega = it->get<double>();
    }
    out.push_back(t);
  }
  return out;
}

inline std::vector<TaggedDetection> read_detections(const std::filesystem::path& path) {
  try {
    return parse_detections(read_json_file(path));
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path.string(), 0) == 0) throw;
    throw ParseError(path.string() + ": " + msg);
  }
}

inline json detection_to_json(const Detection& d, std::optional<double> omega = std::nullopt) {
  json j;
  j["image_id"] = d.image_id;
  j["category_id"] = d.category_id;
  j["bbox"] = detail::bbox_to_json(d.bbox);
  j["score"] = d.score;
  if (d.resolution_index >= 0) j["resolution_index"] = d.resolution_index;
  if (omega) j["omega"] = *omega;
  return j;
}

inline json detections_to_json(std::span<const Detection> dets) {
  json arr = json::array();
  for (const auto& d : dets) arr.push_back(detection_to_json(d));
  return arr;
}

inline json simulated_to_json(const SimulatedDetections& sim) {
  json arr = json::array();
  for (const auto& [image_id, levels] : sim) {
    for (const auto& level : levels) {
      for (const auto& d : level.detections) arr.push_back(detection_to_json(d, level.omega));
    }
  }
  return arr;
}

/// Groups pyramid records by image, then by omega (ascending resolution
/// index, then ascending omega). Records without omega are treated as
/// omega = 1 with their box already in original coordinates.
inline std::map<std::int64_t, std::vector<ResolutionDetections>> group_by_resolution(
    const std::vector<TaggedDetection>& records) {
  std::map<std::int64_t, std::map<double, ResolutionDetections>> grouped;
  for (const auto& r : records) {
    const double omega = r.omega.value_or(1.0);
    auto& level = grouped[r.detection.image_id][omega];
    level.omega = omega;
    level.detections.push_back(r.detection);
  }
  std::map<std::int64_t, std::vector<ResolutionDetections>> out;
  for (auto& [image, levels] : grouped) {
    auto& vec = out[image];
    for (auto& [omega, level] : levels) vec.push_back(std::move(level));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline json eval_result_to_json(const EvalResult& r) {
  json j;
  j["ap"] = r.ap;
  j["ap50"] = r.ap50;
  j["ap75"] = r.ap75;
  j["ap_s"] = r.ap_s;
  j["ap_m"] = r.ap_m;
  j["ap_l"] = r.ap_l;
  j["ar"] = r.ar;
  json cats = json::array();
  for (const auto& c : r.per_category) {
    cats.push_back({{"category_id", c.category_id},
                    {"ap", c.ap},
                    {"ap50", c.ap50},
                    {"ap75", c.ap75},
                    {"ar", c.ar}});
  }
  j["per_category"] = std::move(cats);
  return j;
}

inline EvalResult eval_result_from_json(const json& j) {
  EvalResult r;
  auto get = [&j](const char* key) {
    const auto it = j.find(key);
    return it != j.end() && it->is_number() ? it->get<double>() : kUndefined;
  };
  r.ap = get("ap");
  r.ap50 = get("ap50");
  r.ap75 = get("ap75");
  r.ap_s = get("ap_s");
  r.ap_m = get("ap_m");
  r.ap_l = get("ap_l");
  r.ar = get("ar");
  if (const auto it = j.find("per_category"); it != j.end() && it->is_array()) {
    for (const auto& c : *it) {
      CategoryResult cr;
      cr.category_id = c.value("category_id", std::int64_t{0});
      cr.ap = c.value("ap", kUndefined);
      cr.ap50 = c.value("ap50", kUndefined);
      cr.ap75 = c.value("ap75", kUndefined);
      cr.ar = c.value("ar", kUndefined);
      r.per_category.push_back(cr);
    }
  }
  return r;
}

inline constexpr const char* kEvalCsvHeader = "category,metric,value\n";

/// Rows (category, metric, value); overall metrics use category "all".
/// `prefix` is prepended to metric names (e.g. "restricted_").
inline std::string eval_result_csv_rows(const EvalResult& r, const std::string& prefix = "") {
  std::string out;
  auto row = [&](const std::string& cat, const char* metric, double v) {
    out += cat + "," + prefix + metric + "," + format_number(v) + "\n";
  };
  row("all", "ap", r.ap);
  row("all", "ap50", r.ap50);
  row("all", "ap75", r.ap75);
  row("all", "ap_s", r.ap_s);
  row("all", "ap_m", r.ap_m);
  row("all", "ap_l", r.ap_l);
  row("all", "ar", r.ar);
  for (const auto& c : r.per_category) {
    const auto id = std::to_string(c.category_id);
    row(id, "ap", c.ap);
    row(id, "ap50", c.ap50);
    row(id, "ap75", c.ap75);
    row(id, "ar", c.ar);
  }
  return out;
}

inline std::string eval_result_to_csv(const EvalResult& r) {
  return kEvalCsvHeader + eval_result_csv_rows(r);
}

inline std::string stage_histogram_to_csv(const StageHistogram& h) {
  std::string out = "level,count\n";
  for (const auto& [level, count] : h) {
    out += std::to_string(level) + "," + std::to_string(count) + "\n";
  }
  return out;
}

inline json histogram_to_json(const ScaleHistogram& h) {
  json j;
  json edges = json::array();
  for (double e : h.edges) edges.push_back(e);
  json mass = json::array();
  for (double m : h.mass) mass.push_back(m);
  j["edges"] = std::move(edges);
  j["mass"] = std::move(mass);
  j["underflow"] = h.underflow;
  j["overflow"] = h.overflow;
  j["samples"] = h.samples;
  return j;
}

/// Metrics lookup file: [{"range": [lo, hi], "ap": x, ...optional metrics}].
inline std::map<ScaleRange, EvalResult> parse_metrics_table(const json& doc) {
  if (!doc.is_array()) throw ParseError("metrics table: top level must be an array");
  std::map<ScaleRange, EvalResult> table;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = "metrics row #" + std::to_string(i);
    const json& row = doc[i];
    if (!row.is_object()) throw ParseError(where + ": must be an object");
    const ScaleRange range = range_from_json(detail::field(row, "range", where), where);
    const json& ap = detail::field(row, "ap", where);
    if (!ap.is_number()) throw ParseError(where + ": ap must be a number");
    EvalResult r = eval_result_from_json(row);
    if (!table.emplace(range, r).second) {
      throw ParseError(where + ": duplicate range " + to_string(range));
    }
  }
  return table;
}

inline json search_result_to_json(const SearchResult& r) {
  json j;
  j["best_range"] = range_to_json(r.best);
  j["best_ap"] = r.best_ap;
  json trace = json::array();
  for (const auto& t : r.trace) trace.push_back({{"range", range_to_json(t.range)}, {"ap", t.ap}});
  j["trace"] = std::move(trace);
  return j;
}

}  // namespace isn
