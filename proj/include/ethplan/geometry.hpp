#pragma once

#include <array>
#include <span>
#include <vector>

#include "ethplan/common.hpp"

namespace ethplan::geometry {

struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double length = 0.0;  // along heading
  double width = 0.0;

  std::array<Vec2, 4> corners() const;
};

// Separating-axis test. Touching boxes (zero-width overlap) intersect.
bool boxes_overlap(const OrientedBox& a, const OrientedBox& b);

// Even-odd rule; points on an edge count as inside.
bool point_in_polygon(const Vec2& p, std::span<const Vec2> polygon);

// Arc-length parameterized polyline with nearest-point projection.
class Polyline {
 public:
  explicit Polyline(std::vector<Vec2> points);

  double length() const { return cumulative_.back(); }
  std::span<const Vec2> points() const { return points_; }

  Vec2 point_at(double s) const;
  double heading_at(double s) const;

  struct Projection {
    double s = 0.0;
    double d = 0.0;  // signed, positive to the left of travel
    std::size_t segment = 0;
  };
  Projection project(const Vec2& p) const;

 private:
  std::size_t segment_at(double s) const;

  std::vector<Vec2> points_;
  std::vector<double> cumulative_;
};

}  // namespace ethplan::geometry
