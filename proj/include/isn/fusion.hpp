#pragma once

/// @file fusion.hpp
/// Test-time fusion of detections from several image resolutions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "isn/core.hpp"

namespace isn {

enum class SuppressionMethod { kGaussian, kLinear, kHard };

inline std::string to_string(SuppressionMethod m) {
  switch (m) {
    case SuppressionMethod::kGaussian: return "gaussian";
    case SuppressionMethod::kLinear: return "linear";
    case SuppressionMethod::kHard: return "hard";
  }
  return "gaussian";
}

inline SuppressionMethod parse_suppression_method(const std::string& s) {
  if (s == "gaussian") return SuppressionMethod::kGaussian;
  if (s == "linear") return SuppressionMethod::kLinear;
  if (s == "hard") return SuppressionMethod::kHard;
  throw InvariantError("unknown suppression method '" + s + "'");
}

struct SoftNmsConfig {
  SuppressionMethod method = SuppressionMethod::kGaussian;
  double sigma = 0.5;
  double iou_threshold = 0.3;
  double score_floor = 0.001;
  /// Applied after fusion; nullopt keeps everything.
  std::optional<std::size_t> top_k = 100;

  void validate() const {
    if (!(sigma > 0.0)) throw InvariantError("soft-nms: sigma must be > 0");
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
      throw InvariantError("soft-nms: iou_threshold must lie in (0,1)");
    }
    if (!(score_floor >= 0.0 && score_floor < 1.0)) {
      throw InvariantError("soft-nms: score_floor must lie in [0,1)");
    }
  }
};

/// Multiplier applied to a detection overlapping the selected one by `overlap`.
inline double suppression_factor(double overlap, const SoftNmsConfig& cfg) {
  switch (cfg.method) {
    case SuppressionMethod::kGaussian:
      return std::exp(-(overlap * overlap) / cfg.sigma);
    case SuppressionMethod::kLinear:
      return overlap > cfg.iou_threshold ? 1.0 - overlap : 1.0;
    case SuppressionMethod::kHard:
      return overlap > cfg.iou_threshold ? 0.0 : 1.0;
  }
  return 1.0;
}

/// Keeps detections whose scale, measured in the resized image they were
/// predicted on, lies in range, and maps survivors back to original-image
/// coordinates. Input order is preserved.
inline std::vector<Detection> gate_predictions(std::span<const Detection> dets,
                                               double omega,
                                               const ScaleRange& range) {
  if (!(omega > 0.0)) throw InvariantError("gate_predictions: omega must be > 0");
  std::vector<Detection> kept;
  kept.reserve(dets.size());
  for (const auto& d : dets) {
    if (!range.contains(instance_scale(d.bbox, 1.0))) continue;
    Detection out = d;
    out.bbox = project_box(d.bbox, 1.0 / omega);
    kept.push_back(out);
  }
  return kept;
}

namespace detail {

inline std::vector<Detection> soft_nms_one_class(std::vector<Detection> pending,
                                                 const SoftNmsConfig& cfg) {
  std::vector<Detection> selected;
  selected.reserve(pending.size());
  while (!pending.empty()) {
    const auto best_it =
        std::min_element(pending.begin(), pending.end(), detection_before);
    const Detection best = *best_it;
    pending.erase(best_it);
    selected.push_back(best);

    std::vector<Detection> next;
    next.reserve(pending.size());
    for (auto& d : pending) {
      d.score *= suppression_factor(iou(best.bbox, d.bbox), cfg);
      if (d.score > 0.0 && d.score >= cfg.score_floor) next.push_back(d);
    }
    pending = std::move(next);
  }
  return selected;
}

}  // namespace detail

/// Greedy score-decay suppression, run independently per category.
///
/// Repeatedly selects the highest remaining detection and rescales every
/// other detection of that category by suppression_factor(iou). Detections
/// whose score falls below cfg.score_floor, or to zero, are dropped. The
/// result is ordered by detection_before.
inline std::vector<Detection> soft_nms(std::span<const Detection> dets,
                                       const SoftNmsConfig& cfg) {
  cfg.validate();
  std::map<std::int64_t, std::vector<Detection>> by_class;
  for (const auto& d : dets) by_class[d.category_id].push_back(d);

  std::vector<Detection> out;
  out.reserve(dets.size());
  for (auto& [category, group] : by_class) {
    auto kept = detail::soft_nms_one_class(std::move(group), cfg);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  std::sort(out.begin(), out.end(), detection_before);
  return out;
}

/// Detections of one image predicted at scaling factor omega, in resized
/// coordinates.
struct ResolutionDetections {
  double omega = 1.0;
  std::vector<Detection> detections;
};

/// Gate every resolution, merge, suppress, then cut to cfg.top_k.
/// All detections must belong to one image.
inline std::vector<Detection> fuse_multiscale(
    std::span<const ResolutionDetections> per_resolution, const ScaleRange& range,
    const SoftNmsConfig& cfg) {
  std::vector<Detection> merged;
  for (const auto& level : per_resolution) {
    auto gated = gate_predictions(level.detections, level.omega, range);
    merged.insert(merged.end(), gated.begin(), gated.end());
  }
  std::sort(merged.begin(), merged.end(), detection_before);
  auto fused = soft_nms(merged, cfg);
  if (cfg.top_k && fused.size() > *cfg.top_k) {
    fused.erase(fused.begin() + static_cast<std::ptrdiff_t>(*cfg.top_k), fused.end());
  }
  return fused;
}

}  // namespace isn
