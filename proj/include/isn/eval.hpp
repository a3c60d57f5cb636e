#pragma once

/// @file eval.hpp
/// COCO-style box evaluation: AP averaged over IoU thresholds with 101-point
/// interpolated precision, size-bucketed AP, AR, and AP restricted to ground
/// truth inside a scale range.
///
/// Matching follows the reference COCO tooling: per (image, category), ground
/// truth is ordered non-ignored first; each detection, in score order, takes
/// the unmatched ground truth with the highest IoU at or above the threshold,
/// preferring non-ignored boxes. Crowd regions can absorb any number of
/// detections and are compared by intersection over detection area.
/// Detections absorbed by ignored ground truth leave the ranking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "isn/core.hpp"

namespace isn {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Area interval [lo, hi) in original-image pixels squared.
struct AreaBucket {
  std::string name;
  double lo = 0.0;
  double hi = kInf;
  bool contains(double area) const { return lo <= area && area < hi; }
};

inline std::vector<double> coco_iou_thresholds() {
  std::vector<double> t(10);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.5 + 0.05 * static_cast<double>(i);
  return t;
}

inline std::vector<AreaBucket> coco_area_buckets() {
  return {{"all", 0.0, kInf},
          {"small", 0.0, 32.0 * 32.0},
          {"medium", 32.0 * 32.0, 96.0 * 96.0},
          {"large", 96.0 * 96.0, kInf}};
}

struct EvalConfig {
  std::vector<double> iou_thresholds = coco_iou_thresholds();
  /// The first bucket must be named "all"; AP_s/m/l read "small"/"medium"/"large".
  std::vector<AreaBucket> area_buckets = coco_area_buckets();
  std::size_t recall_points = 101;
  std::optional<ScaleRange> scale_restriction;
  std::size_t max_dets = 100;

  void validate() const {
    if (iou_thresholds.empty()) throw EvalError("eval config: no IoU thresholds");
    for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
      const double t = iou_thresholds[i];
      if (!(t > 0.0 && t <= 1.0)) throw EvalError("eval config: IoU threshold outside (0,1]");
      if (i > 0 && !(t > iou_thresholds[i - 1])) {
        throw EvalError("eval config: IoU thresholds must be strictly increasing");
      }
    }
    if (area_buckets.empty() || area_buckets.front().name != "all") {
      throw EvalError("eval config: first area bucket must be 'all'");
    }
    if (recall_points < 2) throw EvalError("eval config: need at least 2 recall points");
    if (max_dets == 0) throw EvalError("eval config: max_dets must be positive");
  }

  /// Recall sample points 0, 0.01, ..., 1 for the default 101.
  std::vector<double> recall_thresholds() const {
    std::vector<double> r(recall_points);
    const double step = 1.0 / static_cast<double>(recall_points - 1);
    for (std::size_t i = 0; i < recall_points; ++i) r[i] = step * static_cast<double>(i);
    return r;
  }
};

inline constexpr double kUndefined = -1.0;

struct CategoryResult {
  std::int64_t category_id = 0;
  double ap = kUndefined;
  double ap50 = kUndefined;
  double ap75 = kUndefined;
  double ar = kUndefined;
};

/// All metrics in [0,1], or kUndefined when no ground truth supports them.
struct EvalResult {
  double ap = kUndefined;
  double ap50 = kUndefined;
  double ap75 = kUndefined;
  double ap_s = kUndefined;
  double ap_m = kUndefined;
  double ap_l = kUndefined;
  double ar = kUndefined;
  std::vector<CategoryResult> per_category;
};

namespace detail {

/// Matching outcome for one (image, category, bucket).
struct ImageEval {
  std::vector<double> scores;                // score order
  std::vector<std::vector<char>> matched;    // [threshold][det]
  std::vector<std::vector<char>> ignored;    // [threshold][det]
  std::size_t positives = 0;                 // non-ignored ground truth
};

inline ImageEval evaluate_image(std::vector<const Instance*> gts,
                                std::vector<const Detection*> dts,
                                const AreaBucket& bucket, const EvalConfig& cfg) {
  auto gt_ignored = [&](const Instance* g) {
    return g->iscrowd || !bucket.contains(g->bbox.area()) ||
           (cfg.scale_restriction &&
            !cfg.scale_restriction->contains(instance_scale(g->bbox, 1.0)));
  };
  std::stable_sort(gts.begin(), gts.end(), [&](const Instance* a, const Instance* b) {
    return !gt_ignored(a) && gt_ignored(b);
  });
  std::stable_sort(dts.begin(), dts.end(), [](const Detection* a, const Detection* b) {
    return a->score > b->score;
  });
  if (dts.size() > cfg.max_dets) dts.resize(cfg.max_dets);

  const std::size_t G = gts.size();
  const std::size_t D = dts.size();
  const std::size_t T = cfg.iou_thresholds.size();

  std::vector<char> ig(G);
  ImageEval out;
  for (std::size_t g = 0; g < G; ++g) {
    ig[g] = gt_ignored(gts[g]) ? 1 : 0;
    if (!ig[g]) ++out.positives;
  }
  std::vector<double> overlaps(D * G);
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t g = 0; g < G; ++g) {
      overlaps[d * G + g] = gts[g]->iscrowd ? crowd_overlap(dts[d]->bbox, gts[g]->bbox)
                                            : iou(dts[d]->bbox, gts[g]->bbox);
    }
  }

  out.scores.resize(D);
  for (std::size_t d = 0; d < D; ++d) out.scores[d] = dts[d]->score;
  out.matched.assign(T, std::vector<char>(D, 0));
  out.ignored.assign(T, std::vector<char>(D, 0));

  for (std::size_t t = 0; t < T; ++t) {
    std::vector<char> gt_taken(G, 0);
    for (std::size_t d = 0; d < D; ++d) {
      double best = std::min(cfg.iou_thresholds[t], 1.0 - 1e-10);
      std::ptrdiff_t m = -1;
      for (std::size_t g = 0; g < G; ++g) {
        if (gt_taken[g] && !gts[g]->iscrowd) continue;
        if (m > -1 && !ig[static_cast<std::size_t>(m)] && ig[g]) break;
        if (overlaps[d * G + g] < best) continue;
        best = overlaps[d * G + g];
        m = static_cast<std::ptrdiff_t>(g);
      }
      if (m == -1) {
        out.ignored[t][d] = bucket.contains(dts[d]->bbox.area()) ? 0 : 1;
        continue;
      }
      const auto mg = static_cast<std::size_t>(m);
      out.matched[t][d] = 1;
      out.ignored[t][d] = ig[mg];
      gt_taken[mg] = 1;
    }
  }
  return out;
}

struct Accumulated {
  std::vector<std::vector<double>> precision;  // [threshold][recall point], or empty
  std::vector<double> recall;                  // [threshold], kUndefined if no positives
};

inline Accumulated accumulate(const std::vector<ImageEval>& images,
                              const EvalConfig& cfg,
                              const std::vector<double>& recall_thresholds) {
  const std::size_t T = cfg.iou_thresholds.size();
  const std::size_t R = recall_thresholds.size();
  Accumulated acc;
  acc.precision.assign(T, std::vector<double>(R, kUndefined));
  acc.recall.assign(T, kUndefined);

  std::size_t positives = 0;
  struct Ref {
    double score;
    std::size_t image;
    std::size_t det;
  };
  std::vector<Ref> ranking;
  for (std::size_t i = 0; i < images.size(); ++i) {
    positives += images[i].positives;
    for (std::size_t d = 0; d < images[i].scores.size(); ++d) {
      ranking.push_back({images[i].scores[d], i, d});
    }
  }
  if (positives == 0) return acc;
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const Ref& a, const Ref& b) { return a.score > b.score; });

  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> rc;
    std::vector<double> pr;
    double tp = 0.0;
    double fp = 0.0;
    for (const auto& ref : ranking) {
      const auto& im = images[ref.image];
      if (im.ignored[t][ref.det]) continue;
      if (im.matched[t][ref.det]) {
        tp += 1.0;
      } else {
        fp += 1.0;
      }
      rc.push_back(tp / static_cast<double>(positives));
      pr.push_back(tp / (tp + fp));
    }
    acc.recall[t] = rc.empty() ? 0.0 : rc.back();
    for (std::size_t i = pr.size(); i-- > 1;) {
      pr[i - 1] = std::max(pr[i - 1], pr[i]);
    }
    for (std::size_t r = 0; r < R; ++r) {
      const auto it = std::lower_bound(rc.begin(), rc.end(), recall_thresholds[r]);
      const auto idx = static_cast<std::size_t>(it - rc.begin());
      acc.precision[t][r] = idx < pr.size() ? pr[idx] : 0.0;
    }
  }
  return acc;
}

inline double mean_defined(const std::vector<double>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (v > kUndefined) {
      sum += v;
      ++n;
    }
  }
  return n == 0 ? kUndefined : sum / static_cast<double>(n);
}

inline std::optional<std::size_t> threshold_index(const std::vector<double>& thresholds,
                                                  double value) {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (std::abs(thresholds[i] - value) < 1e-9) return i;
  }
  return std::nullopt;
}

}  // namespace detail

/// Evaluates detections against ground truth.
///
/// The category vocabulary is the union of `categories` and the ground-truth
/// categories; a detection outside it is an EvalError. Categories without
/// (non-ignored) ground truth are excluded from every mean. With
/// cfg.scale_restriction set, ground truth outside the range becomes ignored
/// and detections outside it are discarded before matching.
inline EvalResult evaluate(std::span<const Instance> gts,
                           std::span<const Detection> dets, const EvalConfig& cfg,
                           std::span<const std::int64_t> categories = {}) {
  cfg.validate();
  std::set<std::int64_t> vocabulary(categories.begin(), categories.end());
  std::set<std::int64_t> image_ids;
  for (const auto& g : gts) {
    vocabulary.insert(g.category_id);
    image_ids.insert(g.image_id);
  }
  for (const auto& d : dets) {
    if (!vocabulary.contains(d.category_id)) {
      throw EvalError("detection on image " + std::to_string(d.image_id) +
                      " has category " + std::to_string(d.category_id) +
                      " outside the ground-truth vocabulary");
    }
    image_ids.insert(d.image_id);
  }

  using Key = std::pair<std::int64_t, std::int64_t>;  // (category, image)
  std::map<Key, std::vector<const Instance*>> gt_index;
  std::map<Key, std::vector<const Detection*>> dt_index;
  for (const auto& g : gts) gt_index[{g.category_id, g.image_id}].push_back(&g);
  for (const auto& d : dets) {
    if (cfg.scale_restriction &&
        !cfg.scale_restriction->contains(instance_scale(d.bbox, 1.0))) {
      continue;
    }
    dt_index[{d.category_id, d.image_id}].push_back(&d);
  }

  const auto recall_thresholds = cfg.recall_thresholds();
  const std::size_t A = cfg.area_buckets.size();
  // [bucket] -> flattened precision values / recall values across categories
  std::vector<std::vector<double>> precision_pool(A);
  std::vector<std::vector<double>> recall_pool(A);
  std::vector<double> ap50_pool;
  std::vector<double> ap75_pool;
  const auto i50 = detail::threshold_index(cfg.iou_thresholds, 0.5);
  const auto i75 = detail::threshold_index(cfg.iou_thresholds, 0.75);

  EvalResult result;
  for (std::int64_t category : vocabulary) {
    CategoryResult per_cat;
    per_cat.category_id = category;
    for (std::size_t a = 0; a < A; ++a) {
      std::vector<detail::ImageEval> images;
      images.reserve(image_ids.size());
      for (std::int64_t image : image_ids) {
        const Key key{category, image};
        const auto gi = gt_index.find(key);
        const auto di = dt_index.find(key);
        if (gi == gt_index.end() && di == dt_index.end()) continue;
        images.push_back(detail::evaluate_image(
            gi == gt_index.end() ? std::vector<const Instance*>{} : gi->second,
            di == dt_index.end() ? std::vector<const Detection*>{} : di->second,
            cfg.area_buckets[a], cfg));
      }
      const auto acc = detail::accumulate(images, cfg, recall_thresholds);
      std::vector<double> flat;
      for (const auto& row : acc.precision) flat.insert(flat.end(), row.begin(), row.end());
      precision_pool[a].insert(precision_pool[a].end(), flat.begin(), flat.end());
      recall_pool[a].insert(recall_pool[a].end(), acc.recall.begin(), acc.recall.end());
      if (a == 0) {
        per_cat.ap = detail::mean_defined(flat);
        per_cat.ar = detail::mean_defined(acc.recall);
        if (i50) {
          per_cat.ap50 = detail::mean_defined(acc.precision[*i50]);
          ap50_pool.insert(ap50_pool.end(), acc.precision[*i50].begin(),
                           acc.precision[*i50].end());
        }
        if (i75) {
          per_cat.ap75 = detail::mean_defined(acc.precision[*i75]);
          ap75_pool.insert(ap75_pool.end(), acc.precision[*i75].begin(),
                           acc.precision[*i75].end());
        }
      }
    }
    result.per_category.push_back(per_cat);
  }

  result.ap = detail::mean_defined(precision_pool[0]);
  result.ar = detail::mean_defined(recall_pool[0]);
  result.ap50 = detail::mean_defined(ap50_pool);
  result.ap75 = detail::mean_defined(ap75_pool);
  for (std::size_t a = 0; a < A; ++a) {
    const auto& name = cfg.area_buckets[a].name;
    const double v = detail::mean_defined(precision_pool[a]);
    if (name == "small") result.ap_s = v;
    if (name == "medium") result.ap_m = v;
    if (name == "large") result.ap_l = v;
  }
  return result;
}

struct ScaleReport {
  EvalResult unrestricted;
  EvalResult restricted;
  ScaleRange range;
};

/// evaluate() with and without restricting ground truth to `range`.
inline ScaleReport ap_by_scale_report(std::span<const Instance> gts,
                                      std::span<const Detection> dets,
                                      const EvalConfig& cfg, const ScaleRange& range,
                                      std::span<const std::int64_t> categories = {}) {
  EvalConfig plain = cfg;
  plain.scale_restriction.reset();
  EvalConfig restricted = cfg;
  restricted.scale_restriction = range;
  return {evaluate(gts, dets, plain, categories),
          evaluate(gts, dets, restricted, categories), range};
}

}  // namespace isn
