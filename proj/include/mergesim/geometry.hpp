#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>

#include "mergesim/core.hpp"

namespace mergesim {

// Floor applied to longitudinal distances before any angle or gap math.
// The collinear ds -> 0 case is singular; a small floor keeps every
// downstream acceleration finite.
inline constexpr double kMinLongitudinalGap = 0.1;  // m

inline double clamp_gap(double ds) { return std::max(ds, kMinLongitudinalGap); }

/// Lane-based position: arc length along the centerline and signed lateral
/// offset (left of travel positive).
struct StPosition {
  double s = 0.0;
  double t = 0.0;
  bool extrapolated = false;  // point projected beyond a polyline end
};

/// Projects a planar point onto a polyline centerline. The winning segment
/// is the one with the smallest perpendicular distance; ties break toward
/// the smaller arc length so output is deterministic.
inline StPosition xy_to_st(const Vec2& point, std::span<const Vec2> centerline) {
  if (centerline.size() < 2)
    throw std::invalid_argument("centerline needs at least 2 points");
  if (!std::isfinite(point.x) || !std::isfinite(point.y))
    throw std::invalid_argument("invalid geometry input");

  double best_d2 = std::numeric_limits<double>::infinity();
  StPosition best;
  double arc = 0.0;
  for (std::size_t i = 0; i + 1 < centerline.size(); ++i) {
    const Vec2& a = centerline[i];
    const Vec2& b = centerline[i + 1];
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len2 = ex * ex + ey * ey;
    if (len2 <= 0.0) throw std::invalid_argument("degenerate centerline segment");
    const double len = std::sqrt(len2);
    const double px = point.x - a.x, py = point.y - a.y;
    const double u_raw = (px * ex + py * ey) / len2;
    const double u = std::clamp(u_raw, 0.0, 1.0);
    const double cx = a.x + u * ex, cy = a.y + u * ey;
    const double dx = point.x - cx, dy = point.y - cy;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2 - 1e-12 ||
        (std::abs(d2 - best_d2) <= 1e-12 && arc + u * len < best.s)) {
      best_d2 = d2;
      best.s = arc + u * len;
      // left of travel direction is positive: cross(e, p - a)
      const double cross = ex * py - ey * px;
      best.t = (cross >= 0.0 ? 1.0 : -1.0) * std::sqrt(d2);
      best.extrapolated =
          (i == 0 && u_raw < 0.0) || (i + 2 == centerline.size() && u_raw > 1.0);
    }
    arc += len;
  }
  return best;
}

inline double polyline_length(std::span<const Vec2> line) {
  double arc = 0.0;
  for (std::size_t i = 0; i + 1 < line.size(); ++i)
    arc += std::hypot(line[i + 1].x - line[i].x, line[i + 1].y - line[i].y);
  return arc;
}

namespace detail {

// Distances from the observer to the rear-left and rear-right corners of a
// leader of width `width`, offset (ds, t) to its rear center. Symmetric in
// the sign of the lateral offset, so left and right merges behave the same.
struct CornerDistances {
  double d1, d2;  // d2 >= d1
};

inline CornerDistances corner_distances(double ds, double lateral, double width) {
  const double t = std::abs(lateral);
  const double w = 0.5 * width;
  return {std::hypot(ds, t - w), std::hypot(ds, t + w)};
}

}  // namespace detail

/// Visual angle subtended at the TA driver's eye by the rear of a vehicle
/// of width `width`, centered `dt` to the side and `ds` ahead.
inline double visual_angle(double ds, double dt, double width) {
  if (!std::isfinite(ds) || !std::isfinite(dt) || !std::isfinite(width) || width <= 0.0)
    throw std::invalid_argument("invalid geometry input");
  const double ds_c = clamp_gap(ds);
  const auto [d1, d2] = detail::corner_distances(ds_c, dt, width);
  const double cos_theta = (d1 * d1 + d2 * d2 - width * width) / (2.0 * d1 * d2);
  return std::acos(std::clamp(cos_theta, -1.0, 1.0));
}

struct EffectiveDistance {
  double value = 0.0;
  bool degenerate = false;  // corner distances numerically violated |d1-d2| < W
};

/// Straight-ahead distance that subtends the same visual angle as a vehicle
/// laterally offset by dt. The lateral offset is scaled by zeta first;
/// values below 1 shorten the effective distance and sharpen the reaction.
/// At dt = 0 this reduces to the absolute distance.
inline EffectiveDistance effective_distance(double ds, double dt, double width, double zeta) {
  if (!std::isfinite(ds) || !std::isfinite(dt) || !std::isfinite(width) ||
      !std::isfinite(zeta) || width <= 0.0 || zeta <= 0.0)
    throw std::invalid_argument("invalid geometry input");
  const double ds_c = clamp_gap(ds);
  const double t = std::abs(dt) * zeta;
  const double w = 0.5 * width;
  const auto [d1, d2] = detail::corner_distances(ds_c, t, width);
  const double sum = d1 + d2;
  // d2 - d1 without cancellation: d2^2 - d1^2 = 4*t*w.
  const double diff = 4.0 * t * w / sum;
  const double num = sum * sum - width * width;
  const double den = width * width - diff * diff;
  if (den <= 0.0 || num < 0.0) return {kMinLongitudinalGap, true};
  return {0.5 * width * std::sqrt(num / den), false};
}

/// Backward-difference rate of the visual angle across one simulation step.
/// The first step of a rollout has no previous angle and reports zero.
inline double visual_angle_rate(double theta_now, std::optional<double> theta_prev,
                                double dt_step) {
  if (dt_step <= 0.0) throw std::invalid_argument("dt_step must be positive");
  if (!theta_prev.has_value()) return 0.0;
  return (theta_now - *theta_prev) / dt_step;
}

}  // namespace mergesim
