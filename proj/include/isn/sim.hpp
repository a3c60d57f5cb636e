#pragma once

/// @file sim.hpp
/// Synthetic scale-conditioned detector and experiment harness.
///
/// The simulated detector is reliable for objects whose scale in the resized
/// image lies inside a band, and degrades geometrically per octave outside
/// it: detection probability shrinks and box jitter grows. Randomness is
/// drawn from independent streams keyed by (seed, image, instance, omega), so
/// results do not depend on processing order or on which other resolutions
/// are simulated.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "isn/core.hpp"
#include "isn/dataset.hpp"
#include "isn/eval.hpp"
#include "isn/fusion.hpp"

namespace isn {

struct DetectorProfile {
  double sweet_low = 32.0;
  double sweet_high = 480.0;
  double p_detect_in_band = 0.95;
  double p_detect_decay = 0.5;
  double loc_noise_frac = 0.02;
  double loc_noise_growth = 2.0;
  double fp_rate = 0.5;
  double tp_score_mean = 0.8;
  double tp_score_std = 0.1;
  double fp_score_mean = 0.3;
  double fp_score_std = 0.15;
  std::uint64_t seed = 0;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(p_detect_in_band) || !prob(p_detect_decay)) {
      throw InvariantError("detector profile: probabilities must lie in [0,1]");
    }
    if (!(sweet_low > 0.0 && sweet_low < sweet_high)) {
      throw InvariantError("detector profile: need 0 < sweet_low < sweet_high");
    }
    if (!(loc_noise_frac >= 0.0) || !(loc_noise_growth >= 0.0) || !(fp_rate >= 0.0) ||
        !(tp_score_std >= 0.0) || !(fp_score_std >= 0.0)) {
      throw InvariantError("detector profile: noise parameters must be >= 0");
    }
  }

  /// Octaves between a resized scale and the reliable band; 0 inside it.
  double octaves_outside(double resized_scale) const {
    if (resized_scale < sweet_low) return std::log2(sweet_low / resized_scale);
    if (resized_scale > sweet_high) return std::log2(resized_scale / sweet_high);
    return 0.0;
  }

  double detection_probability(double resized_scale) const {
    return p_detect_in_band * std::pow(p_detect_decay, octaves_outside(resized_scale));
  }

  double jitter_std(double resized_scale) const {
    return loc_noise_frac * std::pow(loc_noise_growth, octaves_outside(resized_scale));
  }
};

/// Shape of a generated dataset.
struct SyntheticConfig {
  std::size_t num_images = 200;
  std::int64_t image_height = 480;
  std::int64_t image_width = 640;
  int min_instances = 1;
  int max_instances = 20;
  double scale_min = 4.0;
  double scale_max = 640.0;
  double aspect_min = 0.5;
  double aspect_max = 2.0;
  int num_categories = 3;

  void validate() const {
    if (num_images == 0 || image_height < 1 || image_width < 1) {
      throw InvariantError("synthetic config: empty image set");
    }
    if (min_instances < 0 || max_instances < min_instances) {
      throw InvariantError("synthetic config: bad instance count range");
    }
    if (!(scale_min > 0.0 && scale_min < scale_max) ||
        !(aspect_min > 0.0 && aspect_min <= aspect_max) || num_categories < 1) {
      throw InvariantError("synthetic config: bad scale, aspect or category settings");
    }
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class Stream : std::uint64_t { kLayout = 1, kInstance = 2, kFalsePositive = 3 };

inline std::mt19937_64 stream_rng(std::uint64_t seed, Stream stream, std::int64_t image_id,
                                  std::int64_t instance_id = 0, double omega = 0.0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  h = splitmix64(h ^ static_cast<std::uint64_t>(image_id));
  h = splitmix64(h ^ static_cast<std::uint64_t>(instance_id));
  h = splitmix64(h ^ std::bit_cast<std::uint64_t>(omega));
  return std::mt19937_64(h);
}

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

inline double clamped_normal(std::mt19937_64& rng, double mean, double stddev) {
  if (stddev == 0.0) return std::clamp(mean, 0.0, 1.0);
  std::normal_distribution<double> n(mean, stddev);
  return std::clamp(n(rng), 0.0, 1.0);
}

/// Clips [x0,x1]x[y0,y1] to [0,width]x[0,height]; nullopt when nothing is left.
inline std::optional<BBox> clip_box(double x0, double y0, double x1, double y1,
                                    double width, double height) {
  x0 = std::clamp(x0, 0.0, width);
  x1 = std::clamp(x1, 0.0, width);
  y0 = std::clamp(y0, 0.0, height);
  y1 = std::clamp(y1, 0.0, height);
  if (!(x1 - x0 > 1e-6) || !(y1 - y0 > 1e-6)) return std::nullopt;
  return BBox{x0, y0, x1 - x0, y1 - y0};
}

}  // namespace detail

/// Images of identical size with log-uniform instance scales. Boxes larger
/// than the image are clamped to it.
inline Dataset generate_dataset(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Dataset ds;
  for (int c = 1; c <= cfg.num_categories; ++c) {
    ds.categories.push_back({c, "class_" + std::to_string(c)});
  }
  const double W = static_cast<double>(cfg.image_width);
  const double H = static_cast<double>(cfg.image_height);
  std::int64_t next_id = 1;
  for (std::size_t i = 0; i < cfg.num_images; ++i) {
    const auto image_id = static_cast<std::int64_t>(i + 1);
    ds.images.push_back({image_id, cfg.image_height, cfg.image_width,
                         "synthetic_" + std::to_string(image_id) + ".jpg"});
    auto rng = detail::stream_rng(seed, detail::Stream::kLayout, image_id);
    std::uniform_int_distribution<int> count(cfg.min_instances, cfg.max_instances);
    std::uniform_int_distribution<int> category(1, cfg.num_categories);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
      const double scale = detail::log_uniform(rng, cfg.scale_min, cfg.scale_max);
      const double aspect = detail::log_uniform(rng, cfg.aspect_min, cfg.aspect_max);
      const double w = std::min(scale * std::sqrt(aspect), W);
      const double h = std::min(scale / std::sqrt(aspect), H);
      const double x = unit(rng) * (W - w);
      const double y = unit(rng) * (H - h);
      const auto cat = static_cast<std::int64_t>(category(rng));
      ds.instances.push_back({BBox{x, y, w, h}, cat, false, next_id++, image_id});
    }
  }
  return ds;
}

/// Instances with log-normally distributed scales (median `median_scale`,
/// log-space std `log_sigma`), one per image, for scale-distribution studies.
inline Dataset generate_lognormal_population(std::size_t count, double median_scale,
                                             double log_sigma, std::uint64_t seed,
                                             std::int64_t image_height = 480,
                                             std::int64_t image_width = 640) {
  if (!(median_scale > 0.0) || !(log_sigma >= 0.0) || image_height < 1 || image_width < 1) {
    throw InvariantError("lognormal population: bad parameters");
  }
  Dataset ds;
  ds.categories.push_back({1, "object"});
  const double W = static_cast<double>(image_width);
  const double H = static_cast<double>(image_height);
  for (std::size_t i = 0; i < count; ++i) {
    const auto id = static_cast<std::int64_t>(i + 1);
    ds.images.push_back({id, image_height, image_width, ""});
    auto rng = detail::stream_rng(seed, detail::Stream::kLayout, id);
    std::normal_distribution<double> log_scale(std::log(median_scale), log_sigma);
    const double s = std::exp(log_scale(rng));
    const double w = std::min(s, W);
    const double h = std::min(s, H);
    ds.instances.push_back({BBox{0.0, 0.0, w, h}, 1, false, id, id});
  }
  return ds;
}

/// Detections for one image at every pyramid level, in resized coordinates.
/// Crowd regions are never detected.
inline std::vector<ResolutionDetections> simulate_image(
    const ImageInfo& image, std::span<const Instance> gts, const PyramidSpec& pyramid,
    const DetectorProfile& profile, std::span<const std::int64_t> categories) {
  profile.validate();
  std::vector<ResolutionDetections> out;
  out.reserve(pyramid.size());
  for (std::size_t r = 0; r < pyramid.size(); ++r) {
    const double omega = pyramid[r];
    const double W = static_cast<double>(image.width) * omega;
    const double H = static_cast<double>(image.height) * omega;
    ResolutionDetections level{omega, {}};

    for (const auto& gt : gts) {
      if (gt.iscrowd) continue;
      auto rng = detail::stream_rng(profile.seed, detail::Stream::kInstance, image.id,
                                    gt.id, omega);
      const BBox resized = project_box(gt.bbox, omega);
      const double scale = instance_scale(resized, 1.0);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      if (!(unit(rng) < profile.detection_probability(scale))) continue;

      const double sd = profile.jitter_std(scale);
      double cx = resized.x() + resized.w() / 2.0;
      double cy = resized.y() + resized.h() / 2.0;
      double w = resized.w();
      double h = resized.h();
      if (sd > 0.0) {
        std::normal_distribution<double> n(0.0, sd);
        cx += n(rng) * resized.w();
        cy += n(rng) * resized.h();
        w *= std::exp(n(rng));
        h *= std::exp(n(rng));
      }
      const auto box = sd > 0.0 ? detail::clip_box(cx - w / 2, cy - h / 2, cx + w / 2,
                                                   cy + h / 2, W, H)
                                : std::optional<BBox>(resized);
      if (!box) continue;
      const double score =
          detail::clamped_normal(rng, profile.tp_score_mean, profile.tp_score_std);
      level.detections.push_back(
          {*box, gt.category_id, score, static_cast<int>(r), image.id});
    }

    if (profile.fp_rate > 0.0 && !categories.empty()) {
      auto rng = detail::stream_rng(profile.seed, detail::Stream::kFalsePositive,
                                    image.id, 0, omega);
      std::poisson_distribution<int> count(profile.fp_rate);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::uniform_int_distribution<std::size_t> pick(0, categories.size() - 1);
      const int n = count(rng);
      const double max_scale = std::max(4.0, std::min(W, H));
      for (int k = 0; k < n; ++k) {
        const double scale = detail::log_uniform(rng, 4.0, std::max(4.0 + 1e-9, max_scale));
        const double aspect = detail::log_uniform(rng, 0.5, 2.0);
        const double w = std::min(scale * std::sqrt(aspect), W);
        const double h = std::min(scale / std::sqrt(aspect), H);
        const double x = unit(rng) * (W - w);
        const double y = unit(rng) * (H - h);
        const auto cat = categories[pick(rng)];
        const double score =
            detail::clamped_normal(rng, profile.fp_score_mean, profile.fp_score_std);
        const auto box = detail::clip_box(x, y, x + w, y + h, W, H);
        if (!box) continue;
        level.detections.push_back({*box, cat, score, static_cast<int>(r), image.id});
      }
    }
    out.push_back(std::move(level));
  }
  return out;
}

using SimulatedDetections = std::map<std::int64_t, std::vector<ResolutionDetections>>;

/// simulate_image over every image of the dataset, keyed by image id.
inline SimulatedDetections simulate_detections(const Dataset& dataset,
                                               const PyramidSpec& pyramid,
                                               const DetectorProfile& profile) {
  const auto by_image = dataset.instances_by_image();
  const auto categories = dataset.category_ids();
  SimulatedDetections out;
  for (const auto& image : dataset.images) {
    const auto it = by_image.find(image.id);
    const std::span<const Instance> gts =
        it == by_image.end() ? std::span<const Instance>{} : std::span(it->second);
    out[image.id] = simulate_image(image, gts, pyramid, profile, categories);
  }
  return out;
}

enum class StrategyKind { kIsn, kNaiveMultiScale, kSingleScale };

struct Strategy {
  StrategyKind kind = StrategyKind::kIsn;
  double omega = 1.0;  // single-scale only

  static Strategy isn() { return {StrategyKind::kIsn, 1.0}; }
  static Strategy naive_ms() { return {StrategyKind::kNaiveMultiScale, 1.0}; }
  static Strategy single_scale(double omega) { return {StrategyKind::kSingleScale, omega}; }
};

inline std::string to_string(const Strategy& s) {
  switch (s.kind) {
    case StrategyKind::kIsn: return "isn";
    case StrategyKind::kNaiveMultiScale: return "naive_ms";
    case StrategyKind::kSingleScale: return "single_scale(" + std::to_string(s.omega) + ")";
  }
  return "isn";
}

/// Fuses pre-simulated pyramid detections of every image under a strategy.
/// Single-scale picks the level whose omega matches and applies no gate.
inline std::vector<Detection> fuse_with_strategy(const SimulatedDetections& simulated,
                                                 const ScaleRange& range,
                                                 const Strategy& strategy,
                                                 const SoftNmsConfig& nms) {
  std::vector<Detection> all;
  for (const auto& [image_id, levels] : simulated) {
    std::vector<Detection> fused;
    switch (strategy.kind) {
      case StrategyKind::kIsn:
        fused = fuse_multiscale(levels, range, nms);
        break;
      case StrategyKind::kNaiveMultiScale:
        fused = fuse_multiscale(levels, ScaleRange::unbounded(), nms);
        break;
      case StrategyKind::kSingleScale: {
        std::vector<ResolutionDetections> one;
        for (const auto& level : levels) {
          if (level.omega == strategy.omega) one.push_back(level);
        }
        if (one.empty()) {
          throw InvariantError("single-scale strategy: omega " +
                               std::to_string(strategy.omega) + " was not simulated");
        }
        fused = fuse_multiscale(one, ScaleRange::unbounded(), nms);
        break;
      }
    }
    all.insert(all.end(), fused.begin(), fused.end());
  }
  return all;
}

/// Simulates, fuses and evaluates one strategy end to end.
inline EvalResult run_experiment(const Dataset& dataset, const PyramidSpec& pyramid,
                                 const ScaleRange& range, const DetectorProfile& profile,
                                 const Strategy& strategy, const SoftNmsConfig& nms = {},
                                 const EvalConfig& eval_cfg = {}) {
  const PyramidSpec levels = strategy.kind == StrategyKind::kSingleScale
                                 ? PyramidSpec({strategy.omega})
                                 : pyramid;
  const auto simulated = simulate_detections(dataset, levels, profile);
  const auto dets = fuse_with_strategy(simulated, range, strategy, nms);
  const auto categories = dataset.category_ids();
  return evaluate(dataset.instances, dets, eval_cfg, categories);
}

}  // namespace isn
