#include "ethplan/geometry.hpp"

#include <algorithm>
#include <limits>

namespace ethplan::geometry {

std::array<Vec2, 4> OrientedBox::corners() const {
  const Vec2 ax{std::cos(heading), std::sin(heading)};
  const Vec2 ay{-ax.y, ax.x};
  const Vec2 hl = ax * (0.5 * length);
  const Vec2 hw = ay * (0.5 * width);
  return {center + hl + hw, center - hl + hw, center - hl - hw, center + hl - hw};
}

namespace {

// Projection radius of a box onto a unit axis.
double radius_on(const OrientedBox& b, const Vec2& axis) {
  const Vec2 ax{std::cos(b.heading), std::sin(b.heading)};
  const Vec2 ay{-ax.y, ax.x};
  return 0.5 * b.length * std::abs(ax.dot(axis)) + 0.5 * b.width * std::abs(ay.dot(axis));
}

}  // namespace

bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  const Vec2 delta = b.center - a.center;
  const std::array<Vec2, 4> axes = {
      Vec2{std::cos(a.heading), std::sin(a.heading)},
      Vec2{-std::sin(a.heading), std::cos(a.heading)},
      Vec2{std::cos(b.heading), std::sin(b.heading)},
      Vec2{-std::sin(b.heading), std::cos(b.heading)},
  };
  // Relative slack absorbs rounding in the trig terms so exact contact stays closed.
  for (const auto& axis : axes) {
    const double dist = std::abs(delta.dot(axis));
    const double reach = radius_on(a, axis) + radius_on(b, axis);
    if (dist > reach * (1.0 + 1e-12) + 1e-12) return false;
  }
  return true;
}

bool point_in_polygon(const Vec2& p, std::span<const Vec2> polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = polygon[i];
    const Vec2& b = polygon[j];
    // On-edge check.
    const Vec2 ab = b - a;
    const Vec2 ap = p - a;
    const double seg2 = ab.dot(ab);
    if (seg2 > 0.0 && std::abs(ab.cross(ap)) <= 1e-9 * std::sqrt(seg2)) {
      const double t = ap.dot(ab) / seg2;
      if (t >= -1e-12 && t <= 1.0 + 1e-12) return true;
    }
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

Polyline::Polyline(std::vector<Vec2> points) : points_(std::move(points)) {
  if (points_.size() < 2)
    throw Error(ErrorKind::kInvalidArgument, "polyline needs at least 2 points");
  cumulative_.reserve(points_.size());
  cumulative_.push_back(0.0);
  for (std::size_t i = 1; i < points_.size(); ++i) {
    const double seg = (points_[i] - points_[i - 1]).norm();
    if (seg <= 0.0) throw Error(ErrorKind::kInvalidArgument, "polyline has a zero-length segment");
    cumulative_.push_back(cumulative_.back() + seg);
  }
}

std::size_t Polyline::segment_at(double s) const {
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t idx = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  return std::min(idx, points_.size() - 2);
}

Vec2 Polyline::point_at(double s) const {
  const std::size_t i = segment_at(s);
  const Vec2 dir = points_[i + 1] - points_[i];
  const double seg = cumulative_[i + 1] - cumulative_[i];
  // Extrapolates linearly past either end.
  return points_[i] + dir * ((s - cumulative_[i]) / seg);
}

double Polyline::heading_at(double s) const {
  const std::size_t i = segment_at(s);
  const Vec2 dir = points_[i + 1] - points_[i];
  return std::atan2(dir.y, dir.x);
}

Polyline::Projection Polyline::project(const Vec2& p) const {
  Projection best;
  double best_d2 = std::numeric_limits<double>::infinity();
  const std::size_t nseg = points_.size() - 1;
  for (std::size_t i = 0; i < nseg; ++i) {
    const Vec2 a = points_[i];
    const Vec2 ab = points_[i + 1] - a;
    const double seg2 = ab.dot(ab);
    double t = (p - a).dot(ab) / seg2;
    // End segments extend past the path so points beyond the ends report s
    // outside [0, length].
    if (i > 0) t = std::max(t, 0.0);
    if (i + 1 < nseg) t = std::min(t, 1.0);
    const Vec2 foot = a + ab * t;
    const double d2 = (p - foot).dot(p - foot);
    if (d2 < best_d2) {
      best_d2 = d2;
      best.s = cumulative_[i] + t * std::sqrt(seg2);
      best.d = ab.cross(p - a) >= 0.0 ? std::sqrt(d2) : -std::sqrt(d2);
      best.segment = i;
    }
  }
  return best;
}

}  // namespace ethplan::geometry
