#pragma once

/// @file core.hpp
/// Geometric primitives shared by every stage of the scale-normalization
/// pipeline: boxes, instances, detections, scale ranges and image pyramids.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace isn {

/// Raised when a value violates a domain invariant at construction time.
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Axis-aligned box in continuous pixel coordinates (left, top, width, height).
///
/// Width and height must be strictly positive and every field finite.
/// Coordinates are never rounded.
class BBox {
 public:
  BBox(double x, double y, double w, double h) : x_(x), y_(y), w_(w), h_(h) {
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) ||
        !std::isfinite(h)) {
      throw InvariantError("bbox: non-finite coordinate");
    }
    if (!(w > 0.0) || !(h > 0.0)) {
      std::ostringstream os;
      os << "bbox: non-positive size (w=" << w << ", h=" << h << ")";
      throw InvariantError(os.str());
    }
  }

  double x() const { return x_; }
  double y() const { return y_; }
  double w() const { return w_; }
  double h() const { return h_; }
  double right() const { return x_ + w_; }
  double bottom() const { return y_ + h_; }
  double area() const { return w_ * h_; }

  friend bool operator==(const BBox&, const BBox&) = default;

  /// Lexicographic order on (x, y, w, h); used only for deterministic tie-breaks.
  friend bool lex_less(const BBox& a, const BBox& b) {
    return std::tie(a.x_, a.y_, a.w_, a.h_) < std::tie(b.x_, b.y_, b.w_, b.h_);
  }

 private:
  double x_;
  double y_;
  double w_;
  double h_;
};

/// Ground-truth object.
struct Instance {
  BBox bbox;
  std::int64_t category_id = 1;
  bool iscrowd = false;
  std::int64_t id = 0;
  std::int64_t image_id = 0;
};

/// Predicted object. resolution_index is -1 when not produced by a pyramid level.
struct Detection {
  BBox bbox;
  std::int64_t category_id = 1;
  double score = 0.0;
  int resolution_index = -1;
  std::int64_t image_id = 0;
};

inline void check_score(double score) {
  if (!(score >= 0.0 && score <= 1.0)) {
    std::ostringstream os;
    os << "detection: score " << score << " outside [0,1]";
    throw InvariantError(os.str());
  }
}

/// Closed scale interval [lower, upper]; upper may be +inf.
class ScaleRange {
 public:
  ScaleRange(double lower, double upper) : lower_(lower), upper_(upper) {
    if (std::isnan(lower) || std::isnan(upper) || !(lower >= 0.0) ||
        !(lower < upper)) {
      std::ostringstream os;
      os << "scale range: require 0 <= lower < upper, got [" << lower << ", "
         << upper << "]";
      throw InvariantError(os.str());
    }
  }

  /// [0, +inf): admits every scale.
  static ScaleRange unbounded() { return {0.0, kInf}; }

  double lower() const { return lower_; }
  double upper() const { return upper_; }
  bool contains(double scale) const {
    return lower_ <= scale && scale <= upper_;
  }
  bool is_unbounded() const { return lower_ == 0.0 && upper_ == kInf; }

  friend bool operator==(const ScaleRange&, const ScaleRange&) = default;
  friend auto operator<=>(const ScaleRange& a, const ScaleRange& b) {
    return std::tie(a.lower_, a.upper_) <=> std::tie(b.lower_, b.upper_);
  }

 private:
  double lower_;
  double upper_;
};

inline std::string to_string(const ScaleRange& r) {
  std::ostringstream os;
  os << "[" << r.lower() << ", ";
  if (r.upper() == kInf) {
    os << "inf";
  } else {
    os << r.upper();
  }
  os << "]";
  return os.str();
}

/// Ordered set of image scaling factors. Non-empty, positive, no duplicates.
class PyramidSpec {
 public:
  explicit PyramidSpec(std::vector<double> omegas) : omegas_(std::move(omegas)) {
    if (omegas_.empty()) {
      throw InvariantError("pyramid: empty scaling-factor list");
    }
    for (std::size_t i = 0; i < omegas_.size(); ++i) {
      if (!std::isfinite(omegas_[i]) || !(omegas_[i] > 0.0)) {
        throw InvariantError("pyramid: scaling factors must be finite and > 0");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (omegas_[i] == omegas_[j]) {
          throw InvariantError("pyramid: duplicate scaling factor");
        }
      }
    }
  }

  static PyramidSpec defaults() { return PyramidSpec({4.0, 2.0, 1.0, 0.5, 0.25}); }

  std::span<const double> omegas() const { return omegas_; }
  std::size_t size() const { return omegas_.size(); }
  double operator[](std::size_t i) const { return omegas_[i]; }

 private:
  std::vector<double> omegas_;
};

/// sqrt(w*h) of the box after resizing the image by omega.
inline double instance_scale(const BBox& b, double omega) {
  return omega * std::sqrt(b.w() * b.h());
}

struct ImageSize {
  std::int64_t height = 0;
  std::int64_t width = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// Image dimensions at scaling factor omega, rounded, each at least 1.
inline ImageSize resize_plan(std::int64_t image_h, std::int64_t image_w,
                             double omega) {
  if (image_h < 1 || image_w < 1 || !(omega > 0.0)) {
    throw InvariantError("resize_plan: require h, w >= 1 and omega > 0");
  }
  auto scaled = [omega](std::int64_t v) {
    return std::max<std::int64_t>(
        1, std::llround(static_cast<double>(v) * omega));
  };
  return {scaled(image_h), scaled(image_w)};
}

inline BBox project_box(const BBox& b, double omega) {
  return {b.x() * omega, b.y() * omega, b.w() * omega, b.h() * omega};
}

inline double intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x(), b.x());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y(), b.y());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

/// Intersection over union.
inline double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Overlap of a detection with a crowd region: intersection over the
/// detection's own area (COCO crowd convention).
inline double crowd_overlap(const BBox& det, const BBox& crowd) {
  return std::clamp(intersection_area(det, crowd) / det.area(), 0.0, 1.0);
}

/// Strict weak order used wherever detections must be processed
/// deterministically: score descending, then resolution index ascending,
/// then box lexicographic, then category and image.
inline bool detection_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.resolution_index != b.resolution_index) {
    return a.resolution_index < b.resolution_index;
  }
  if (a.bbox != b.bbox) return lex_less(a.bbox, b.bbox);
  if (a.category_id != b.category_id) return a.category_id < b.category_id;
  return a.image_id < b.image_id;
}

}  // namespace isn
