#pragma once

/// @file pyramid_analysis.hpp
/// Feature-pyramid level assignment and per-level counts of training samples
/// that survive scale normalization.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>

#include "isn/core.hpp"
#include "isn/sampling.hpp"

namespace isn {

/// level = clamp(floor(canonical_level + log2(scale / canonical_scale)),
///               min_level, max_level)
struct FpnAssignConfig {
  double canonical_scale = 224.0;
  int canonical_level = 4;
  int min_level = 2;
  int max_level = 5;

  void validate() const {
    if (!(canonical_scale > 0.0)) throw InvariantError("fpn: canonical scale must be > 0");
    if (!(min_level <= canonical_level && canonical_level <= max_level)) {
      throw InvariantError("fpn: need min_level <= canonical_level <= max_level");
    }
  }
};

inline int fpn_level(double scale, const FpnAssignConfig& cfg = {}) {
  if (!(scale > 0.0)) throw InvariantError("fpn_level: scale must be > 0");
  const double raw =
      std::floor(cfg.canonical_level + std::log2(scale / cfg.canonical_scale));
  return static_cast<int>(std::clamp(raw, static_cast<double>(cfg.min_level),
                                     static_cast<double>(cfg.max_level)));
}

/// Level -> number of valid (instance, resolution) pairs; every level in
/// [min_level, max_level] is present.
using StageHistogram = std::map<int, std::size_t>;

inline StageHistogram stage_histogram(std::span<const Instance> instances,
                                      const PyramidSpec& pyramid, const ScaleRange& range,
                                      const FpnAssignConfig& cfg = {}) {
  cfg.validate();
  StageHistogram hist;
  for (int level = cfg.min_level; level <= cfg.max_level; ++level) hist[level] = 0;
  for (std::size_t i = 0; i < pyramid.size(); ++i) {
    const double omega = pyramid[i];
    const auto part = isn_partition(instances, omega, range, static_cast<int>(i));
    for (const auto& inst : part.valid) {
      ++hist[fpn_level(instance_scale(inst.bbox, omega), cfg)];
    }
  }
  return hist;
}

}  // namespace isn
