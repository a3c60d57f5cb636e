#pragma once

/// @file config.hpp
/// Application configuration with JSON (de)serialization.
///
/// Schema (every key optional, unknown keys rejected):
///
///   {
///     "seed": 0,
///     "omegas": [4.0, 2.0, 1.0, 0.5, 0.25],
///     "isn_range": [16, 560],                      // upper may be "inf"
///     "soft_nms": {"method": "gaussian", "sigma": 0.5, "iou_threshold": 0.3,
///                  "score_floor": 0.001, "top_k": 100},   // top_k null = no cap
///     "eval": {"iou_thresholds": [...], "recall_points": 101, "max_dets": 100,
///              "scale_restriction": null},
///     "search": {"lower_candidates": [0,16,32], "upper_candidates": [320,496,560,640],
///                "initial": [0, 640], "sweep": "directional" | "full"},
///     "sim": {"profile": {...DetectorProfile fields...},
///             "dataset": {...SyntheticConfig fields...}},
///     "fpn": {"canonical_scale": 224, "canonical_level": 4, "min_level": 2, "max_level": 5},
///     "snip_table": [{"resolution": [800, 1200], "range": [40, 160]},
///                    {"resolution": [480, 800], "range": [120, "inf"], "omega": 1.0}]
///   }

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "isn/core.hpp"
#include "isn/eval.hpp"
#include "isn/fusion.hpp"
#include "isn/io.hpp"
#include "isn/pyramid_analysis.hpp"
#include "isn/sampling.hpp"
#include "isn/search.hpp"
#include "isn/sim.hpp"

namespace isn {

struct AppConfig {
  std::uint64_t seed = 0;
  PyramidSpec pyramid = PyramidSpec::defaults();
  ScaleRange isn_range{16.0, 560.0};
  SoftNmsConfig soft_nms;
  EvalConfig eval;
  SearchSpace search;
  SweepPolicy sweep = SweepPolicy::kDirectional;
  DetectorProfile profile;
  SyntheticConfig synthetic;
  FpnAssignConfig fpn;
  SnipRangeTable snip_table = SnipRangeTable::example_table();

  void validate() const {
    soft_nms.validate();
    eval.validate();
    search.validate();
    profile.validate();
    synthetic.validate();
    fpn.validate();
  }
};

namespace detail {

inline void reject_unknown(const json& obj, std::initializer_list<const char*> known,
                           const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) throw ParseError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_into(const json& obj, const char* key, T& target, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    target = it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + "." + key + ": wrong type");
  }
}

inline std::vector<double> number_array(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ParseError(where + ": expected an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

/// Applies the keys present in `doc` on top of `cfg`.
inline void merge_config(AppConfig& cfg, const json& doc) {
  using detail::read_into;
  detail::reject_unknown(doc,
                         {"seed", "omegas", "isn_range", "soft_nms", "eval", "search", "sim",
                          "fpn", "snip_table"},
                         "config");
  try {
    read_into(doc, "seed", cfg.seed, "config");
    if (doc.contains("omegas")) {
      cfg.pyramid = PyramidSpec(detail::number_array(doc["omegas"], "config.omegas"));
    }
    if (doc.contains("isn_range")) {
      cfg.isn_range = range_from_json(doc["isn_range"], "config.isn_range");
    }

    if (const auto it = doc.find("soft_nms"); it != doc.end()) {
      const std::string w = "config.soft_nms";
      detail::reject_unknown(*it, {"method", "sigma", "iou_threshold", "score_floor", "top_k"},
                             w);
      if (it->contains("method")) {
        std::string m;
        read_into(*it, "method", m, w);
        cfg.soft_nms.method = parse_suppression_method(m);
      }
      read_into(*it, "sigma", cfg.soft_nms.sigma, w);
      read_into(*it, "iou_threshold", cfg.soft_nms.iou_threshold, w);
      read_into(*it, "score_floor", cfg.soft_nms.score_floor, w);
      if (const auto k = it->find("top_k"); k != it->end()) {
        if (k->is_null()) {
          cfg.soft_nms.top_k.reset();
        } else if (k->is_number_unsigned()) {
          cfg.soft_nms.top_k = k->get<std::size_t>();
        } else {
          throw ParseError(w + ".top_k: expected a non-negative integer or null");
        }
      }
    }

    if (const auto it = doc.find("eval"); it != doc.end()) {
      const std::string w = "config.eval";
      detail::reject_unknown(
          *it, {"iou_thresholds", "recall_points", "max_dets", "scale_restriction"}, w);
      if (it->contains("iou_thresholds")) {
        cfg.eval.iou_thresholds = detail::number_array((*it)["iou_thresholds"], w);
      }
      read_into(*it, "recall_points", cfg.eval.recall_points, w);
      read_into(*it, "max_dets", cfg.eval.max_dets, w);
      if (const auto r = it->find("scale_restriction"); r != it->end()) {
        if (r->is_null()) {
          cfg.eval.scale_restriction.reset();
        } else {
          cfg.eval.scale_restriction = range_from_json(*r, w + ".scale_restriction");
        }
      }
    }

    if (const auto it = doc.find("search"); it != doc.end()) {
      const std::string w = "config.search";
      detail::reject_unknown(*it, {"lower_candidates", "upper_candidates", "initial", "sweep"},
                             w);
      if (it->contains("lower_candidates")) {
        cfg.search.lower_candidates = detail::number_array((*it)["lower_candidates"], w);
      }
      if (it->contains("upper_candidates")) {
        cfg.search.upper_candidates = detail::number_array((*it)["upper_candidates"], w);
      }
      if (it->contains("initial")) {
        cfg.search.initial = range_from_json((*it)["initial"], w + ".initial");
      }
      if (it->contains("sweep")) {
        std::string s;
        read_into(*it, "sweep", s, w);
        if (s == "directional") {
          cfg.sweep = SweepPolicy::kDirectional;
        } else if (s == "full") {
          cfg.sweep = SweepPolicy::kFull;
        } else {
          throw ParseError(w + ".sweep: expected 'directional' or 'full'");
        }
      }
    }

    if (const auto it = doc.find("sim"); it != doc.end()) {
      const std::string w = "config.sim";
      detail::reject_unknown(*it, {"profile", "dataset"}, w);
      if (const auto p = it->find("profile"); p != it->end()) {
        const std::string wp = w + ".profile";
        detail::reject_unknown(
            *p,
            {"sweet_low", "sweet_high", "p_detect_in_band", "p_detect_decay",
             "loc_noise_frac", "loc_noise_growth", "fp_rate", "tp_score_mean",
             "tp_score_std", "fp_score_mean", "fp_score_std"},
            wp);
        auto& pr = cfg.profile;
        read_into(*p, "sweet_low", pr.sweet_low, wp);
        read_into(*p, "sweet_high", pr.sweet_high, wp);
        read_into(*p, "p_detect_in_band", pr.p_detect_in_band, wp);
        read_into(*p, "p_detect_decay", pr.p_detect_decay, wp);
        read_into(*p, "loc_noise_frac", pr.loc_noise_frac, wp);
        read_into(*p, "loc_noise_growth", pr.loc_noise_growth, wp);
        read_into(*p, "fp_rate", pr.fp_rate, wp);
        read_into(*p, "tp_score_mean", pr.tp_score_mean, wp);
        read_into(*p, "tp_score_std", pr.tp_score_std, wp);
        read_into(*p, "fp_score_mean", pr.fp_score_mean, wp);
        read_into(*p, "fp_score_std", pr.fp_score_std, wp);
      }
      if (const auto d = it->find("dataset"); d != it->end()) {
        const std::string wd = w + ".dataset";
        detail::reject_unknown(*d,
                               {"num_images", "image_height", "image_width", "min_instances",
                                "max_instances", "scale_min", "scale_max", "aspect_min",
                                "aspect_max", "num_categories"},
                               wd);
        auto& sc = cfg.synthetic;
        read_into(*d, "num_images", sc.num_images, wd);
        read_into(*d, "image_height", sc.image_height, wd);
        read_into(*d, "image_width", sc.image_width, wd);
        read_into(*d, "min_instances", sc.min_instances, wd);
        read_into(*d, "max_instances", sc.max_instances, wd);
        read_into(*d, "scale_min", sc.scale_min, wd);
        read_into(*d, "scale_max", sc.scale_max, wd);
        read_into(*d, "aspect_min", sc.aspect_min, wd);
        read_into(*d, "aspect_max", sc.aspect_max, wd);
        read_into(*d, "num_categories", sc.num_categories, wd);
      }
    }

    if (const auto it = doc.find("fpn"); it != doc.end()) {
      const std::string w = "config.fpn";
      detail::reject_unknown(*it,
                             {"canonical_scale", "canonical_level", "min_level", "max_level"}, w);
      read_into(*it, "canonical_scale", cfg.fpn.canonical_scale, w);
      read_into(*it, "canonical_level", cfg.fpn.canonical_level, w);
      read_into(*it, "min_level", cfg.fpn.min_level, w);
      read_into(*it, "max_level", cfg.fpn.max_level, w);
    }

    if (const auto it = doc.find("snip_table"); it != doc.end()) {
      if (!it->is_array()) throw ParseError("config.snip_table: expected an array");
      std::vector<SnipEntry> entries;
      for (std::size_t i = 0; i < it->size(); ++i) {
        const json& e = (*it)[i];
        const std::string w = "config.snip_table[" + std::to_string(i) + "]";
        detail::reject_unknown(e, {"resolution", "range", "omega"}, w);
        SnipEntry entry;
        if (const auto r = e.find("resolution"); r != e.end()) {
          if (!r->is_array() || r->size() != 2 || !(*r)[0].is_number_integer() ||
              !(*r)[1].is_number_integer()) {
            throw ParseError(w + ".resolution: expected [height, width]");
          }
          entry.height = (*r)[0].get<std::int64_t>();
          entry.width = (*r)[1].get<std::int64_t>();
        }
        if (!e.contains("range")) throw ParseError(w + ": missing range");
        const json& rg = e["range"];
        if (!rg.is_array() || rg.size() != 2) throw ParseError(w + ".range: expected [lo, hi]");
        entry.lower = bound_from_json(rg[0], w + ".range");
        entry.upper = bound_from_json(rg[1], w + ".range");
        if (e.contains("omega")) {
          double omega = 0;
          read_into(e, "omega", omega, w);
          entry.omega = omega;
        }
        entries.push_back(entry);
      }
      cfg.snip_table = SnipRangeTable(std::move(entries));
    }
  } catch (const InvariantError& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
}

inline json config_to_json(const AppConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  json omegas = json::array();
  for (double w : cfg.pyramid.omegas()) omegas.push_back(w);
  j["omegas"] = std::move(omegas);
  j["isn_range"] = range_to_json(cfg.isn_range);

  json nms;
  nms["method"] = to_string(cfg.soft_nms.method);
  nms["sigma"] = cfg.soft_nms.sigma;
  nms["iou_threshold"] = cfg.soft_nms.iou_threshold;
  nms["score_floor"] = cfg.soft_nms.score_floor;
  nms["top_k"] = cfg.soft_nms.top_k ? json(*cfg.soft_nms.top_k) : json(nullptr);
  j["soft_nms"] = std::move(nms);

  json ev;
  json thr = json::array();
  for (double t : cfg.eval.iou_thresholds) thr.push_back(t);
  ev["iou_thresholds"] = std::move(thr);
  ev["recall_points"] = cfg.eval.recall_points;
  ev["max_dets"] = cfg.eval.max_dets;
  ev["scale_restriction"] =
      cfg.eval.scale_restriction ? range_to_json(*cfg.eval.scale_restriction) : json(nullptr);
  j["eval"] = std::move(ev);

  json se;
  se["lower_candidates"] = cfg.search.lower_candidates;
  se["upper_candidates"] = cfg.search.upper_candidates;
  se["initial"] = range_to_json(cfg.search.initial);
  se["sweep"] = cfg.sweep == SweepPolicy::kDirectional ? "directional" : "full";
  j["search"] = std::move(se);

  const auto& p = cfg.profile;
  json profile{{"sweet_low", p.sweet_low},
               {"sweet_high", p.sweet_high},
               {"p_detect_in_band", p.p_detect_in_band},
               {"p_detect_decay", p.p_detect_decay},
               {"loc_noise_frac", p.loc_noise_frac},
               {"loc_noise_growth", p.loc_noise_growth},
               {"fp_rate", p.fp_rate},
               {"tp_score_mean", p.tp_score_mean},
               {"tp_score_std", p.tp_score_std},
               {"fp_score_mean", p.fp_score_mean},
               {"fp_score_std", p.fp_score_std}};
  const auto& s = cfg.synthetic;
  json dataset{{"num_images", s.num_images},       {"image_height", s.image_height},
               {"image_width", s.image_width},     {"min_instances", s.min_instances},
               {"max_instances", s.max_instances}, {"scale_min", s.scale_min},
               {"scale_max", s.scale_max},         {"aspect_min", s.aspect_min},
               {"aspect_max", s.aspect_max},       {"num_categories", s.num_categories}};
  j["sim"] = {{"profile", std::move(profile)}, {"dataset", std::move(dataset)}};

  j["fpn"] = {{"canonical_scale", cfg.fpn.canonical_scale},
              {"canonical_level", cfg.fpn.canonical_level},
              {"min_level", cfg.fpn.min_level},
              {"max_level", cfg.fpn.max_level}};

  json table = json::array();
  for (const auto& e : cfg.snip_table.entries()) {
    json row;
    row["resolution"] = json::array({e.height, e.width});
    row["range"] = json::array({bound_to_json(e.lower), bound_to_json(e.upper)});
    if (e.omega) row["omega"] = *e.omega;
    table.push_back(std::move(row));
  }
  j["snip_table"] = std::move(table);
  return j;
}

}  // namespace isn
