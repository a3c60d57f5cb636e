#pragma once

/// @file sampling.hpp
/// Training-sample selection per image resolution.
///
/// Two policies are modelled. The consistent policy keeps an instance at a
/// resolution iff its scale *in that resolution* falls inside one shared range.
/// The per-resolution policy (SNIP style) keeps an instance iff its scale *in
/// the original image* falls inside a range tuned separately for each
/// resolution. The histogram helpers quantify how much the two label sets
/// overlap on the resized-scale axis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "isn/core.hpp"
#include "isn/dataset.hpp"

namespace isn {

struct Partition {
  std::vector<Instance> valid;
  std::vector<Instance> ignored;
  int resolution_index = -1;
};

/// Crowd regions are always ignored.
inline Partition isn_partition(std::span<const Instance> instances, double omega,
                               const ScaleRange& range,
                               int resolution_index = -1) {
  if (!(omega > 0.0)) throw InvariantError("isn_partition: omega must be > 0");
  Partition p;
  p.resolution_index = resolution_index;
  for (const auto& inst : instances) {
    if (!inst.iscrowd && range.contains(instance_scale(inst.bbox, omega))) {
      p.valid.push_back(inst);
    } else {
      p.ignored.push_back(inst);
    }
  }
  return p;
}

/// One row of a per-resolution range table. The range is an open interval in
/// original-image pixels. When omega is unset the resize factor is derived
/// per image by fitting it into (height, width).
struct SnipEntry {
  std::int64_t height = 0;
  std::int64_t width = 0;
  double lower = 0.0;
  double upper = kInf;
  std::optional<double> omega;

  bool contains(double original_scale) const {
    return lower < original_scale && original_scale < upper;
  }

  /// Short side to height, long side to width, whichever is tighter.
  double omega_for(const ImageSize& image) const {
    if (omega) return *omega;
    const double short_side =
        static_cast<double>(std::min(image.height, image.width));
    const double long_side = static_cast<double>(std::max(image.height, image.width));
    const double target_short = static_cast<double>(std::min(height, width));
    const double target_long = static_cast<double>(std::max(height, width));
    return std::min(target_short / short_side, target_long / long_side);
  }
};

class SnipRangeTable {
 public:
  SnipRangeTable() = default;
  explicit SnipRangeTable(std::vector<SnipEntry> entries)
      : entries_(std::move(entries)) {
    for (const auto& e : entries_) {
      if (std::isnan(e.lower) || std::isnan(e.upper) || !(e.lower < e.upper)) {
        throw InvariantError("snip table: every range needs lower < upper");
      }
      if (e.omega && !(*e.omega > 0.0)) {
        throw InvariantError("snip table: omega must be > 0");
      }
      if (!e.omega && (e.height < 1 || e.width < 1)) {
        throw InvariantError("snip table: entry needs omega or a resolution");
      }
    }
  }

  /// Two-resolution table illustrating SNIP label inconsistency:
  /// (800, 1200) keeps (40, 160), (480, 800) keeps (120, inf).
  static SnipRangeTable example_table() {
    return SnipRangeTable({{800, 1200, 40.0, 160.0, std::nullopt},
                           {480, 800, 120.0, kInf, std::nullopt}});
  }

  std::span<const SnipEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  const SnipEntry& at(int resolution_index) const {
    if (resolution_index < 0 ||
        static_cast<std::size_t>(resolution_index) >= entries_.size()) {
      throw std::out_of_range("snip table: no entry for resolution index " +
                              std::to_string(resolution_index));
    }
    return entries_[static_cast<std::size_t>(resolution_index)];
  }

 private:
  std::vector<SnipEntry> entries_;
};

/// Validity judged on the original-image scale against one table entry.
inline Partition snip_partition(std::span<const Instance> instances,
                                int resolution_index,
                                const SnipRangeTable& table) {
  const SnipEntry& entry = table.at(resolution_index);
  Partition p;
  p.resolution_index = resolution_index;
  for (const auto& inst : instances) {
    if (!inst.iscrowd && entry.contains(instance_scale(inst.bbox, 1.0))) {
      p.valid.push_back(inst);
    } else {
      p.ignored.push_back(inst);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Resized-scale histograms

/// Bins are [edges[i], edges[i+1]). Values below the first edge go to
/// underflow, values at or above the last edge to overflow.
struct ScaleHistogram {
  std::vector<double> edges;
  std::vector<double> mass;
  double underflow = 0.0;
  double overflow = 0.0;
  std::size_t samples = 0;

  explicit ScaleHistogram(std::vector<double> bin_edges = {})
      : edges(std::move(bin_edges)),
        mass(edges.size() > 1 ? edges.size() - 1 : 0, 0.0) {}

  bool empty() const { return samples == 0; }

  void add(double value) {
    ++samples;
    if (edges.size() < 2 || value < edges.front()) {
      underflow += 1.0;
      return;
    }
    if (value >= edges.back()) {
      overflow += 1.0;
      return;
    }
    const auto it = std::upper_bound(edges.begin(), edges.end(), value);
    mass[static_cast<std::size_t>(it - edges.begin()) - 1] += 1.0;
  }

  double total() const {
    double t = underflow + overflow;
    for (double m : mass) t += m;
    return t;
  }

  void normalize() {
    const double t = total();
    if (t <= 0.0) return;
    for (double& m : mass) m /= t;
    underflow /= t;
    overflow /= t;
  }
};

/// count log-spaced bins over [lo, hi].
inline std::vector<double> log_bin_edges(std::size_t count = 64, double lo = 1.0,
                                         double hi = 2560.0) {
  if (count == 0 || !(lo > 0.0) || !(hi > lo)) {
    throw InvariantError("log_bin_edges: need count > 0 and 0 < lo < hi");
  }
  std::vector<double> edges(count + 1);
  const double log_lo = std::log(lo);
  const double step = (std::log(hi) - log_lo) / static_cast<double>(count);
  for (std::size_t i = 0; i <= count; ++i) {
    edges[i] = std::exp(log_lo + step * static_cast<double>(i));
  }
  edges.front() = lo;
  edges.back() = hi;
  return edges;
}

/// Adds cut points so that no bin straddles the boundary of the closed
/// range: one at the lower bound, one just above a finite upper bound.
inline std::vector<double> split_edges_at_range(std::vector<double> edges,
                                                const ScaleRange& range) {
  auto insert = [&edges](double cut) {
    const auto it = std::lower_bound(edges.begin(), edges.end(), cut);
    if (it == edges.end() || *it != cut) edges.insert(it, cut);
  };
  if (range.lower() > 0.0) insert(range.lower());
  if (std::isfinite(range.upper())) {
    insert(std::nextafter(range.upper(), kInf));
  }
  return edges;
}

struct IsnPolicy {
  PyramidSpec pyramid;
  ScaleRange range;
};

struct SnipPolicy {
  SnipRangeTable table;
};

using SamplingPolicy = std::variant<IsnPolicy, SnipPolicy>;

struct ScaleDistributions {
  ScaleHistogram trained;
  ScaleHistogram ignored;
};

/// Default binning for a policy: 64 log bins over [1, 2560], split at the
/// range boundaries for the consistent policy.
inline std::vector<double> default_edges_for(const SamplingPolicy& policy) {
  auto edges = log_bin_edges();
  if (const auto* isn = std::get_if<IsnPolicy>(&policy)) {
    edges = split_edges_at_range(std::move(edges), isn->range);
  }
  return edges;
}

/// Accumulates the resized scale of every (instance, resolution) pair into the
/// trained or ignored histogram according to the policy's label. Both are
/// normalized to unit mass when non-empty.
inline ScaleDistributions resized_scale_distributions(
    const Dataset& dataset, const SamplingPolicy& policy,
    const std::vector<double>& edges) {
  ScaleDistributions out{ScaleHistogram(edges), ScaleHistogram(edges)};
  const auto sizes = dataset.image_sizes();
  auto record = [&out](const Partition& p, double omega) {
    for (const auto& inst : p.valid) out.trained.add(instance_scale(inst.bbox, omega));
    for (const auto& inst : p.ignored) out.ignored.add(instance_scale(inst.bbox, omega));
  };

  if (const auto* isn = std::get_if<IsnPolicy>(&policy)) {
    for (std::size_t i = 0; i < isn->pyramid.size(); ++i) {
      record(isn_partition(dataset.instances, isn->pyramid[i], isn->range,
                           static_cast<int>(i)),
             isn->pyramid[i]);
    }
  } else {
    const auto& table = std::get<SnipPolicy>(policy).table;
    for (const auto& inst : dataset.instances) {
      const auto size_it = sizes.find(inst.image_id);
      if (size_it == sizes.end()) {
        throw std::invalid_argument("instance " + std::to_string(inst.id) +
                                    " references unknown image " +
                                    std::to_string(inst.image_id));
      }
      for (std::size_t r = 0; r < table.size(); ++r) {
        const auto& entry = table.entries()[r];
        record(snip_partition(std::span<const Instance>(&inst, 1),
                              static_cast<int>(r), table),
               entry.omega_for(size_it->second));
      }
    }
  }
  out.trained.normalize();
  out.ignored.normalize();
  return out;
}

inline ScaleDistributions resized_scale_distributions(const Dataset& dataset,
                                                      const SamplingPolicy& policy) {
  return resized_scale_distributions(dataset, policy, default_edges_for(policy));
}

/// Histogram intersection: sum over bins of min(trained, ignored).
/// 0 means no resized scale is both trained and ignored.
inline double consistency_overlap(const ScaleHistogram& trained,
                                  const ScaleHistogram& ignored) {
  if (trained.edges != ignored.edges) {
    throw std::invalid_argument("consistency_overlap: histograms use different bins");
  }
  double overlap = std::min(trained.underflow, ignored.underflow) +
                   std::min(trained.overflow, ignored.overflow);
  for (std::size_t i = 0; i < trained.mass.size(); ++i) {
    overlap += std::min(trained.mass[i], ignored.mass[i]);
  }
  return std::clamp(overlap, 0.0, 1.0);
}

}  // namespace isn
